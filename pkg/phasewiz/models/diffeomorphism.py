"""Monotone reparametrizations u = phi(w) tabulated by one-step integration."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from phasewiz.errors import AdmissibilityError, DomainError, StepSizeError
from phasewiz.models.potential import hadamard_factor

if TYPE_CHECKING:
    from typing import Any, Callable, Dict, Optional, Tuple

    from numpy.typing import ArrayLike, NDArray

    from phasewiz.models.potential import DoubleWellPotential

LOGGER = getLogger("phasewiz.diffeo")

KINDS = ("gaussian", "power", "hadamard", "corridor")


@dataclass
class Diffeomorphism:
    """phi on a uniform t-grid with phi(0) = 0 and phi' > 0 at every node."""

    t_grid: NDArray
    phi_values: NDArray
    phi_prime_values: NDArray
    phi_second_values: NDArray
    kind: str
    params: Dict[str, Any]
    acceleration: Callable[[NDArray, NDArray], NDArray] = field(repr=False)
    _phi: CubicHermiteSpline = field(init=False, repr=False)
    _phi_prime: CubicHermiteSpline = field(init=False, repr=False)
    _inverse: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown diffeomorphism kind '{self.kind}'")
        increasing = np.all(np.diff(self.phi_values) > 0.0)
        if np.any(self.phi_prime_values <= 0.0) or not increasing:
            raise DomainError("a diffeomorphism table must be strictly increasing")
        self._phi = CubicHermiteSpline(
            self.t_grid, self.phi_values, self.phi_prime_values
        )
        self._phi_prime = CubicHermiteSpline(
            self.t_grid, self.phi_prime_values, self.phi_second_values
        )
        self._inverse = CubicHermiteSpline(
            self.phi_values, self.t_grid, 1.0 / self.phi_prime_values
        )

    @property
    def step(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def t_range(self) -> Tuple[float, float]:
        return float(self.t_grid[0]), float(self.t_grid[-1])

    @property
    def phi_range(self) -> Tuple[float, float]:
        return float(self.phi_values[0]), float(self.phi_values[-1])

    def __call__(self, t: ArrayLike) -> NDArray:
        return self._phi(np.asarray(t, dtype=float))

    def derivative(self, t: ArrayLike) -> NDArray:
        return self._phi_prime(np.asarray(t, dtype=float))

    def second_derivative(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        return self.acceleration(self(t), self.derivative(t))

    def inverse(self, y: ArrayLike) -> NDArray:
        """phi^-1(y) for y inside phi_range."""
        return self._inverse(np.asarray(y, dtype=float))

    def in_range(self, y: ArrayLike) -> NDArray:
        lo, hi = self.phi_range
        y = np.asarray(y, dtype=float)
        return (y >= lo) & (y <= hi)


def _rk4(
    rhs: Callable[[NDArray], NDArray],
    y0: NDArray,
    step: float,
    count: int,
    stop: Optional[Callable[[NDArray], bool]] = None,
) -> NDArray:
    """Classical fourth-order steps; stops early when `stop` holds for a new state."""
    states = [np.asarray(y0, dtype=float)]
    y = states[0]
    for _ in range(count):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * step * k1)
        k3 = rhs(y + 0.5 * step * k2)
        k4 = rhs(y + step * k3)
        y = y + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if stop is not None and stop(y):
            break
        states.append(y)
    return np.array(states)


def _two_sided(
    rhs: Callable[[NDArray], NDArray],
    y0: NDArray,
    t_max: float,
    step: float,
    stop: Optional[Callable[[NDArray], bool]] = None,
) -> Tuple[NDArray, NDArray]:
    """Integrates forward and backward from t = 0; returns t and the states."""
    if not 0.0 < step < t_max:
        raise DomainError(f"need 0 < step < t_max, got step {step} and t_max {t_max}")
    count = int(round(t_max / step))
    forward = _rk4(rhs, y0, step, count, stop)
    backward = _rk4(rhs, y0, -step, count, stop)
    states = np.concatenate([backward[:0:-1], forward])
    t = step * np.arange(-(len(backward) - 1), len(forward))
    return t, states


def _strict_core(t: NDArray, phi: NDArray, phi_prime: NDArray, limit: float) -> NDArray:
    """Indices of the contiguous stretch around t = 0 that is strictly increasing."""
    zero = int(np.argmin(np.abs(t)))
    good = (phi_prime > 0.0) & (np.abs(phi) < limit)
    increasing = np.ones_like(good)
    increasing[1:] &= np.diff(phi) > 0.0
    lo = zero
    while lo > 0 and good[lo - 1] and increasing[lo]:
        lo -= 1
    hi = zero
    while hi < len(t) - 1 and good[hi + 1] and increasing[hi + 1]:
        hi += 1
    return np.arange(lo, hi + 1)


def _table(
    t: NDArray,
    phi: NDArray,
    phi_prime: NDArray,
    acceleration: Callable[[NDArray, NDArray], NDArray],
    kind: str,
    params: Dict[str, Any],
    limit: float = np.inf,
) -> Diffeomorphism:
    keep = _strict_core(t, phi, phi_prime, limit)
    if len(keep) < len(t):
        LOGGER.info(
            "%s table trimmed to t in [%.4g, %.4g] where phi stays strictly increasing",
            kind,
            t[keep[0]],
            t[keep[-1]],
        )
    t, phi, phi_prime = t[keep], phi[keep], phi_prime[keep]
    phi_second = acceleration(phi, phi_prime)
    return Diffeomorphism(t, phi, phi_prime, phi_second, kind, params, acceleration)


def build_gaussian(
    theta0: float, t_max: float = 10.0, step: float = 1e-3
) -> Diffeomorphism:
    """phi' = exp(-phi^2 / (2 theta0^2)), phi(0) = 0."""
    if not 0.0 < theta0 < 1.0 / np.sqrt(2.0):
        raise DomainError(f"theta0 must lie in (0, 1/sqrt(2)), got {theta0}")
    scale = 2.0 * theta0**2

    def rhs(y: NDArray) -> NDArray:
        return np.exp(-(y * y) / scale)

    t, states = _two_sided(rhs, np.array([0.0]), t_max, step)
    phi = states[:, 0]
    LOGGER.info("Built the gaussian diffeomorphism with theta0 = %.6g", theta0)
    return _table(
        t,
        phi,
        rhs(phi),
        lambda p, q: -p * q * q / theta0**2,
        "gaussian",
        {"theta0": float(theta0)},
    )


def build_power(c0: float, t_max: float = 10.0, step: float = 1e-3) -> Diffeomorphism:
    """phi' = (1 - phi^2)^(1/c0), phi(0) = 0; |phi| < 1 throughout."""
    if not 0.0 < c0 <= 1.0:
        raise DomainError(f"c0 must lie in (0, 1], got {c0}")
    exponent = 1.0 / c0

    def rhs(y: NDArray) -> NDArray:
        if np.any(np.abs(y) >= 1.0):
            raise StepSizeError(
                f"a step of {step} carries phi to {float(y[0]):.6g}, outside (-1, 1); "
                "reduce the step"
            )
        return (1.0 - y * y) ** exponent

    t, states = _two_sided(rhs, np.array([0.0]), t_max, step)
    phi = states[:, 0]
    # saturated tails are dropped: in floats phi stops increasing near the wells
    keep = np.abs(phi) < 1.0
    t, phi = t[keep], phi[keep]
    LOGGER.info("Built the power diffeomorphism with c0 = %.6g", c0)
    return _table(
        t,
        phi,
        (1.0 - phi * phi) ** exponent,
        lambda p, q: -2.0 * p * q * q / (c0 * (1.0 - p * p)),
        "power",
        {"c0": float(c0)},
        limit=1.0,
    )


def inverse_h_from_spec(
    spec: str, pot: DoubleWellPotential
) -> Callable[[NDArray], NDArray]:
    """1/h from "unit", "constant:<v>" or "hadamard" (1/h = -F)."""
    spec = spec.strip()
    if spec == "unit":
        return lambda u: np.ones_like(np.asarray(u, dtype=float))
    if spec.startswith("constant:"):
        value = float(spec.split(":", 1)[1])
        return lambda u: np.full_like(np.asarray(u, dtype=float), value)
    if spec == "hadamard":

        def minus_F(u: NDArray) -> NDArray:
            u = np.asarray(u, dtype=float)
            zero = u == 0.0
            safe = np.where(zero, 1.0, u)
            return -np.where(zero, pot.Wpp(np.zeros_like(u)), pot.Wp(safe) / safe)

        return minus_F
    raise DomainError(f"unknown 1/h descriptor '{spec}'")


def build_hadamard(
    pot: DoubleWellPotential,
    theta0: float,
    inverse_h: str = "unit",
    band: Tuple[float, float] = (-0.9, 0.9),
    t_max: float = 10.0,
    step: float = 1e-3,
    samples: int = 401,
) -> Diffeomorphism:
    """-phi'' = phi phi'^2 / (theta0^2 h(phi)) with phi(0) = 0, phi'(0) = 1.

    h must satisfy 1/h >= -F on the declared band, F the Hadamard factor of W'.
    """
    if not theta0 > 0.0:
        raise DomainError(f"theta0 must be positive, got {theta0}")
    inv_h = inverse_h_from_spec(inverse_h, pot)
    u = np.linspace(band[0], band[1], samples)
    short = inv_h(u) < -hadamard_factor(pot, u) - 1e-12
    if short.any():
        raise AdmissibilityError(
            f"1/h = {inverse_h} is below -F on the band {band}", u[short].tolist()
        )

    def rhs(y: NDArray) -> NDArray:
        p, q = y
        return np.array([q, -p * q * q * inv_h(p) / theta0**2])

    t, states = _two_sided(rhs, np.array([0.0, 1.0]), t_max, step)
    phi, phi_prime = states[:, 0], states[:, 1]
    LOGGER.info(
        "Built the hadamard diffeomorphism with theta0 = %.6g and 1/h = %s",
        theta0,
        inverse_h,
    )
    return _table(
        t,
        phi,
        phi_prime,
        lambda p, q: -p * q * q * inv_h(p) / theta0**2,
        "hadamard",
        {"theta0": float(theta0), "inverse_h": inverse_h},
    )


def corridor_from_spec(spec: str) -> Callable[[NDArray], NDArray]:
    """A(u) from "power:<c>" or "scaled:<c>" (c/2 (1 - u^2)^2), or "constant:<a>"."""
    spec = spec.strip()
    if spec.startswith(("power:", "scaled:")):
        c = float(spec.split(":", 1)[1])
        return lambda u: 0.5 * c * (1.0 - np.asarray(u) ** 2) ** 2
    if spec.startswith("constant:"):
        a = float(spec.split(":", 1)[1])
        return lambda u: np.full_like(np.asarray(u, dtype=float), a)
    raise DomainError(f"unknown corridor descriptor '{spec}'")


def build_corridor(
    A: str,
    t_max: float = 10.0,
    step: float = 1e-3,
    epsilon: float = 1e-3,
    samples: int = 2001,
) -> Diffeomorphism:
    """phi' = exp(-B(phi)) with B' = s (1 - s^2) / A(s), B(0) = 0.

    A must satisfy 0 < A(u) < (1 - u^2)^2 / 2 on (-1 + epsilon, 1 - epsilon).
    """
    area = corridor_from_spec(A)
    edge = 1.0 - epsilon
    u = np.linspace(-edge, edge, samples)
    values = area(u)
    outside = (values <= 0.0) | (values >= 0.5 * (1.0 - u * u) ** 2)
    if outside.any():
        raise AdmissibilityError(f"A = {A} leaves its corridor", u[outside].tolist())

    def slope(s: float, _: NDArray) -> NDArray:
        return np.array([s * (1.0 - s * s) / float(area(s))])

    options = dict(method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    upper = solve_ivp(slope, (0.0, edge), [0.0], **options)
    lower = solve_ivp(slope, (0.0, -edge), [0.0], **options)
    if not (upper.success and lower.success):
        raise DomainError(f"could not integrate B for A = {A}")

    def B(s: NDArray) -> NDArray:
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0.0, upper.sol(np.abs(s))[0], lower.sol(-np.abs(s))[0])

    def B_prime(s: NDArray) -> NDArray:
        s = np.asarray(s, dtype=float)
        return s * (1.0 - s * s) / area(s)

    def rhs(y: NDArray) -> NDArray:
        return np.exp(-B(y))

    t, states = _two_sided(
        rhs, np.array([0.0]), t_max, step, stop=lambda y: bool(np.abs(y[0]) >= edge)
    )
    phi = states[:, 0]
    LOGGER.info("Built the corridor diffeomorphism with A = %s", A)
    return _table(
        t,
        phi,
        rhs(phi),
        lambda p, q: -B_prime(p) * q * q,
        "corridor",
        {"A": A, "epsilon": float(epsilon)},
        limit=edge,
    )

"""Double-well potentials and the hypotheses they must satisfy."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import Polynomial

from phasewiz.errors import DomainError, HypothesisError

if TYPE_CHECKING:
    from typing import Callable, Dict, List, Tuple

    from numpy.typing import ArrayLike, NDArray

LOGGER = getLogger("phasewiz.model1d")

WELLS = (-1.0, 1.0)
# absolute tolerances used when an equality of (H) is checked in floating point
ZERO_TOL = 1e-12
CURVATURE_TOL = 1e-9


@dataclass(frozen=True)
class DoubleWellPotential:
    """W, W' and W'' evaluators for a potential with wells at -1 and +1."""

    name: str
    eval_W: Callable[[NDArray], NDArray]
    eval_Wp: Callable[[NDArray], NDArray]
    eval_Wpp: Callable[[NDArray], NDArray]
    wells: Tuple[float, float] = WELLS

    def W(self, u: ArrayLike) -> NDArray:
        return self.eval_W(np.asarray(u, dtype=float))

    def Wp(self, u: ArrayLike) -> NDArray:
        return self.eval_Wp(np.asarray(u, dtype=float))

    def Wpp(self, u: ArrayLike) -> NDArray:
        return self.eval_Wpp(np.asarray(u, dtype=float))

    @property
    def is_canonical(self) -> bool:
        return self.name == "canonical"


def canonical_potential() -> DoubleWellPotential:
    """W(u) = (1 - u^2)^2 / 4, so that W'(u) = u^3 - u."""
    return DoubleWellPotential(
        name="canonical",
        eval_W=lambda u: 0.25 * (1.0 - u * u) ** 2,
        eval_Wp=lambda u: u * u * u - u,
        eval_Wpp=lambda u: 3.0 * u * u - 1.0,
    )


def polynomial_potential(
    coefficients: List[float], name: str = ""
) -> DoubleWellPotential:
    """Builds a potential from ascending polynomial coefficients of W."""
    if len(coefficients) < 3:
        raise DomainError("a double-well polynomial needs at least degree 2")
    poly = Polynomial(np.asarray(coefficients, dtype=float))
    first = poly.deriv(1)
    second = poly.deriv(2)
    label = name or "poly:" + ",".join(f"{c:g}" for c in coefficients)
    return DoubleWellPotential(
        name=label,
        eval_W=poly,
        eval_Wp=first,
        eval_Wpp=second,
    )


def potential_from_spec(spec: str) -> DoubleWellPotential:
    """Parses "canonical" or "poly:c0,c1,..." into a potential."""
    spec = spec.strip()
    if spec == "canonical":
        return canonical_potential()
    if spec.startswith("poly:"):
        try:
            coefficients = [float(c) for c in spec[5:].split(",")]
        except ValueError as err:
            raise DomainError(f"could not read coefficients from '{spec}'") from err
        return polynomial_potential(coefficients, name=spec)
    raise DomainError(f"unknown potential '{spec}', use 'canonical' or 'poly:...'")


@dataclass
class HypothesisReport:
    """Outcome of every clause of (H) for one potential."""

    potential: str
    violations: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())

    def failing_clauses(self) -> List[str]:
        return [clause for clause, points in self.violations.items() if points]

    def raise_for_failure(self) -> None:
        for clause in self.failing_clauses():
            raise HypothesisError(clause, self.violations[clause])


def check_hypotheses_H(
    pot: DoubleWellPotential, samples: int = 2001
) -> HypothesisReport:
    """Evaluates each clause of (H) on a uniform sample of [-1, 1].

    Clauses:
        positive_interior: W > 0 on (-1, 1)
        zero_at_wells: W(-1) = W(1) = 0
        critical_wells: W'(-1) = W'(1) = 0
        curvature_wells: W''(-1) = W''(1) = 2
        single_critical_point: W' vanishes exactly once in (-1, 1), at 0
    """
    if samples < 100:
        raise DomainError(
            f"check_hypotheses_H needs at least 100 samples, got {samples}"
        )
    u = np.linspace(-1.0, 1.0, samples)
    interior = u[1:-1]
    wells = np.array(pot.wells)
    report = HypothesisReport(potential=pot.name)

    W_int = pot.W(interior)
    report.violations["positive_interior"] = interior[W_int <= 0.0].tolist()

    W_wells = pot.W(wells)
    report.violations["zero_at_wells"] = wells[np.abs(W_wells) > ZERO_TOL].tolist()

    Wp_wells = pot.Wp(wells)
    critical = np.abs(Wp_wells) > CURVATURE_TOL
    report.violations["critical_wells"] = wells[critical].tolist()

    Wpp_wells = pot.Wpp(wells)
    report.violations["curvature_wells"] = wells[
        np.abs(Wpp_wells - 2.0) > CURVATURE_TOL
    ].tolist()

    # zeros of W' in the open interval, by sign changes and exact hits
    Wp_int = pot.Wp(interior)
    signs = np.sign(Wp_int)
    crossings = []
    for i in np.flatnonzero(signs == 0):
        crossings.append(float(interior[i]))
    for i in np.flatnonzero(signs[:-1] * signs[1:] < 0):
        a, b = interior[i], interior[i + 1]
        fa, fb = Wp_int[i], Wp_int[i + 1]
        crossings.append(float(a - fa * (b - a) / (fb - fa)))
    spacing = 2.0 / (samples - 1)
    if len(crossings) == 1 and abs(crossings[0]) <= spacing:
        report.violations["single_critical_point"] = []
    else:
        report.violations["single_critical_point"] = sorted(crossings) or [float("nan")]

    if report.passed:
        LOGGER.debug("%s satisfies (H) on %s samples", pot.name, samples)
    else:
        LOGGER.info("%s fails (H): %s", pot.name, ", ".join(report.failing_clauses()))
    return report


def hadamard_factor(pot: DoubleWellPotential, u: ArrayLike) -> NDArray:
    """F(u) = W'(u) / u, extended by W''(0) at u = 0."""
    u = np.asarray(u, dtype=float)
    if np.any(np.abs(u) >= 1.0):
        raise DomainError("hadamard_factor needs |u| < 1")
    zero = u == 0.0
    safe = np.where(zero, 1.0, u)
    return np.where(zero, pot.Wpp(np.zeros_like(u)), pot.Wp(safe) / safe)

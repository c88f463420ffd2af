"""The one-dimensional heteroclinic profile and the planar solutions built on it."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicHermiteSpline

from phasewiz.errors import DomainError, QuadratureError
from phasewiz.models.field import ScalarField
from phasewiz.models.potential import check_hypotheses_H

if TYPE_CHECKING:
    from typing import Tuple

    from numpy.typing import ArrayLike, NDArray

    from phasewiz.models.field import Grid
    from phasewiz.models.potential import DoubleWellPotential

LOGGER = getLogger("phasewiz.model1d")

# the table stops where g is this close to a well
WELL_GAP = 1e-10
# nodes of the graded quadrature mesh per unit of s = atanh(g)
NODES_PER_UNIT = 2000


@dataclass
class HeteroclinicProfile:
    """g on a uniform t-grid, with g'' = W'(g), g(0) = 0 and g' = sqrt(2 W(g))."""

    potential: DoubleWellPotential
    t_grid: NDArray
    g_values: NDArray
    gp_values: NDArray
    clamped_range: bool = False
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._spline = CubicHermiteSpline(self.t_grid, self.g_values, self.gp_values)

    @property
    def step(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    @property
    def t_range(self) -> Tuple[float, float]:
        return float(self.t_grid[0]), float(self.t_grid[-1])

    def __call__(self, t: ArrayLike) -> NDArray:
        """g(t); arguments beyond the table are sent to the wells."""
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_range
        inside = self._spline(np.clip(t, lo, hi))
        return np.where(t > hi, 1.0, np.where(t < lo, -1.0, inside))

    def derivative(self, t: ArrayLike) -> NDArray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.t_range
        inside = self._spline(np.clip(t, lo, hi), 1)
        return np.where((t > hi) | (t < lo), 0.0, inside)

    def second_derivative(self, t: ArrayLike) -> NDArray:
        """g'' = W'(g), read from the ODE rather than the spline."""
        return self.potential.Wp(self(t))

    def inverse(self, g: ArrayLike) -> NDArray:
        """t with g(t) = value, for values inside the tabulated range."""
        g = np.asarray(g, dtype=float)
        spline = CubicHermiteSpline(self.g_values, self.t_grid, 1.0 / self.gp_values)
        return spline(g)

    def residuals(self) -> Tuple[float, float]:
        """Equipartition residual and discrete ODE residual, both sup norms."""
        equipartition = np.max(
            np.abs(self.gp_values**2 - 2.0 * self.potential.W(self.g_values))
        )
        g = self.g_values
        second = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / self.step**2
        ode = np.max(np.abs(second - self.potential.Wp(g[1:-1])))
        return float(equipartition), float(ode)


def _half_table(pot: DoubleWellPotential, sign: float) -> Tuple[NDArray, NDArray]:
    """t(g) for g from 0 towards the well at `sign`, on the graded mesh g = tanh(s)."""
    s_end = np.arctanh(1.0 - WELL_GAP)
    count = int(np.ceil(s_end * NODES_PER_UNIT)) | 1
    s = np.linspace(0.0, s_end, count)
    g = sign * np.tanh(s)
    W = pot.W(g)
    if np.any(W[1:] <= 0.0):
        bad = g[1:][W[1:] <= 0.0]
        raise QuadratureError(
            f"W vanishes inside (-1, 1) near u = {bad[0]:.6g}; no heteroclinic exists"
        )
    # dt/ds = (1 - g^2) / sqrt(2 W(g)), smooth up to the wells
    integrand = (1.0 - np.tanh(s) ** 2) / np.sqrt(2.0 * W)
    t = sign * cumulative_simpson(integrand, x=s, initial=0.0)
    return t, g


def solve_profile(
    pot: DoubleWellPotential, t_max: float = 12.0, step: float = 1e-3
) -> HeteroclinicProfile:
    """Heteroclinic profile from the first integral g' = sqrt(2 W(g)).

    The inverse function t(g) is integrated on a mesh graded like (1 - g^2)
    and truncated one part in 1e10 away from the wells; the result is then
    resampled on a uniform t-grid by cubic Hermite interpolation, which uses
    the exact slopes sqrt(2 W(g)) and so stays monotone.
    """
    if step <= 0.0 or step > 1e-2:
        raise DomainError(f"profile step must lie in (0, 1e-2], got {step}")
    if t_max <= 0.0:
        raise DomainError(f"t_max must be positive, got {t_max}")
    check_hypotheses_H(pot).raise_for_failure()

    t_pos, g_pos = _half_table(pot, 1.0)
    t_neg, g_neg = _half_table(pot, -1.0)
    t_table = np.concatenate([t_neg[:0:-1], t_pos])
    g_table = np.concatenate([g_neg[:0:-1], g_pos])
    gp_table = np.sqrt(2.0 * pot.W(g_table))

    reach = min(-t_table[0], t_table[-1])
    clamped = t_max > reach
    if clamped:
        LOGGER.warning(
            "profile t_max %s exceeds the reachable range %.4f; clamping", t_max, reach
        )
        t_max = float(reach)
    count = int(np.floor(t_max / step))
    t_grid = step * np.arange(-count, count + 1)
    table = CubicHermiteSpline(t_table, g_table, gp_table)
    g_values = table(t_grid)
    g_values[count] = 0.0
    gp_values = np.sqrt(2.0 * pot.W(g_values))

    if np.any(np.diff(g_values) <= 0.0):
        raise QuadratureError("profile lost strict monotonicity; reduce the step")
    LOGGER.info(
        "Solved the %s profile on [%s, %s] with step %s",
        pot.name,
        t_grid[0],
        t_grid[-1],
        step,
    )
    return HeteroclinicProfile(
        potential=pot,
        t_grid=t_grid,
        g_values=g_values,
        gp_values=gp_values,
        clamped_range=clamped,
    )


def planar_solution(
    profile: HeteroclinicProfile,
    direction: ArrayLike,
    offset: float,
    grid: Grid,
    name: str = "u",
) -> ScalarField:
    """u(x) = g(x . direction + offset) sampled on the grid."""
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (grid.dim,):
        raise DomainError(f"direction must have {grid.dim} components")
    if abs(np.linalg.norm(direction) - 1.0) > 1e-12:
        raise DomainError("direction must be a unit vector")
    t = grid.coordinates() @ direction + offset
    lo, hi = profile.t_range
    clamped = (t < lo) | (t > hi)
    if np.any(clamped):
        LOGGER.warning(
            "%s grid nodes lie beyond the profile range and are set to the wells",
            int(clamped.sum()),
        )
    return ScalarField(
        grid=grid,
        values=profile(t),
        name=name,
        provenance="analytic",
        metadata={
            "direction": direction.tolist(),
            "offset": float(offset),
            "clamped": clamped,
        },
    )

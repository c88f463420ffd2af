"""Density weights G(x, p) = g(x) |p| for the weighted perimeter."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.ndimage import binary_dilation

from phasewiz.errors import DomainError
from phasewiz.helpers.calculus import gradient_norm

if TYPE_CHECKING:
    from typing import Any, Dict, Optional

    from numpy.typing import ArrayLike, NDArray

    from phasewiz.models.field import Grid, ScalarField

LOGGER = getLogger("phasewiz.perimeter")

KINDS = ("unit", "exp_theta", "power_alpha", "grad_w")
# weights whose minimality only holds in balls below d0 / 2
LOCAL_KINDS = ("exp_theta", "grad_w")


@dataclass
class DensityWeight:
    """A density field g on a grid; NaN marks nodes where g is undefined."""

    kind: str
    grid: Grid
    density: NDArray = field(repr=False)
    params: Dict[str, Any] = field(default_factory=dict)
    rescale: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise DomainError(f"unknown weight kind '{self.kind}', use one of {KINDS}")
        self.density = np.asarray(self.density, dtype=float)
        if self.density.shape != self.grid.shape:
            raise DomainError("density must have one value per grid node")
        if not self.rescale > 0.0:
            raise DomainError(f"rescale factor must be positive, got {self.rescale}")

    @property
    def is_local(self) -> bool:
        return self.kind in LOCAL_KINDS

    @property
    def values(self) -> NDArray:
        return self.rescale * self.density

    def at(self, points: ArrayLike) -> NDArray:
        """g at arbitrary points by multilinear interpolation.

        NaN where any corner of the enclosing cell is undefined.
        """
        interpolator = RegularGridInterpolator(
            self.grid.axes,
            self.values,
            method="linear",
            bounds_error=False,
            fill_value=np.nan,
        )
        return interpolator(np.atleast_2d(points))

    def G(self, points: ArrayLike, p: ArrayLike) -> NDArray:
        """G(x, p) = g(x) |p|."""
        return self.at(points) * np.linalg.norm(np.atleast_2d(p), axis=-1)

    def rescaled(self, factor: float) -> DensityWeight:
        return replace(self, rescale=self.rescale * factor)


def unit_weight(grid: Grid) -> DensityWeight:
    """The area integrand A(p) = |p|."""
    return DensityWeight("unit", grid, np.ones(grid.shape))


def exp_theta_weight(u: ScalarField, theta0: float) -> DensityWeight:
    """g = exp(u^2 / (2 theta0^2)) |grad u|."""
    if not theta0 > 0.0:
        raise DomainError(f"theta0 must be positive, got {theta0}")
    density = np.exp(u.values**2 / (2.0 * theta0**2)) * gradient_norm(u)
    return DensityWeight("exp_theta", u.grid, density, {"theta0": float(theta0)})


def power_alpha_weight(u: ScalarField, alpha: float) -> DensityWeight:
    """g = (1 - u^2)^(-alpha) |grad u|, undefined where |u| >= 1."""
    if not alpha > 0.0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    gap = 1.0 - u.values**2
    defined = gap > 0.0
    density = np.full(u.grid.shape, np.nan)
    density[defined] = gap[defined] ** (-alpha) * gradient_norm(u)[defined]
    if not defined.all():
        undefined = int((~defined).sum())
        LOGGER.info("power_alpha density is undefined on %s nodes", undefined)
    return DensityWeight("power_alpha", u.grid, density, {"alpha": float(alpha)})


def grad_w_weight(w: ScalarField) -> DensityWeight:
    """g = |grad w|, undefined on flagged nodes and their neighbours."""
    density = gradient_norm(w)
    flagged = w.metadata.get("flagged")
    if flagged is not None and np.any(flagged):
        density = np.where(binary_dilation(flagged, iterations=1), np.nan, density)
    return DensityWeight("grad_w", w.grid, density, {"field": w.name})


def build_weight(
    kind: str,
    u: ScalarField,
    w: Optional[ScalarField] = None,
    theta0: Optional[float] = None,
    alpha: Optional[float] = None,
) -> DensityWeight:
    """Dispatches on the weight kind; each kind names the inputs it needs."""
    if kind == "unit":
        return unit_weight(u.grid)
    if kind == "exp_theta":
        if theta0 is None:
            raise DomainError("exp_theta weights need theta0")
        return exp_theta_weight(u, theta0)
    if kind == "power_alpha":
        if alpha is None:
            raise DomainError("power_alpha weights need alpha")
        return power_alpha_weight(u, alpha)
    if kind == "grad_w":
        if w is None:
            raise DomainError("grad_w weights need the transformed field w")
        return grad_w_weight(w)
    raise DomainError(f"unknown weight kind '{kind}', use one of {KINDS}")

"""Finite differences on uniform grids and the pointwise quantities built on them."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import EmptyRegionError, GridError
from phasewiz.models.field import ScalarField

if TYPE_CHECKING:
    from typing import List, Optional, Tuple

    from numpy.typing import ArrayLike, NDArray

    from phasewiz.models.field import Ball
    from phasewiz.models.potential import DoubleWellPotential

LOGGER = getLogger("phasewiz.field")

GRAD_FLOOR = 1e-8
# residual statistics skip nodes whose stencils reach one-sided differences
RESIDUAL_MARGIN = 2


@dataclass
class ResidualStats:
    """Max and mean of a nodewise residual over a node set."""

    name: str
    max: float
    mean: float
    count: int
    tolerance: Optional[float] = None
    excluded: int = 0

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.max <= self.tolerance

    @classmethod
    def over(
        cls,
        name: str,
        residual: NDArray,
        mask: NDArray,
        tolerance: Optional[float] = None,
        excluded: int = 0,
    ) -> ResidualStats:
        if not mask.any():
            raise EmptyRegionError(f"{name}: no nodes to evaluate")
        values = np.abs(residual[mask])
        return cls(
            name,
            float(values.max()),
            float(values.mean()),
            int(mask.sum()),
            tolerance,
            excluded,
        )


def _second_difference(values: NDArray, axis: int, h: float) -> NDArray:
    """u_{x_i x_i}: three-point centre stencil, second-order one-sided at the ends."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h**2
    out[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def _check_nodes(u: ScalarField, needed: int) -> None:
    if min(u.grid.shape) < needed:
        raise GridError(f"this stencil needs at least {needed} nodes per axis")


def gradient(u: ScalarField) -> NDArray:
    """Central differences inside, one-sided second order on the faces.

    The result has shape (dim, *grid.shape).
    """
    _check_nodes(u, 3)
    parts = np.gradient(u.values, u.h, edge_order=2)
    if u.grid.dim == 1:
        parts = [parts]
    return np.stack(parts)


def gradient_norm(u: ScalarField) -> NDArray:
    return np.linalg.norm(gradient(u), axis=0)


def hessian(u: ScalarField) -> NDArray:
    """Symmetric FD Hessian with shape (dim, dim, *shape)."""
    _check_nodes(u, 5)
    dim, h = u.grid.dim, u.h
    out = np.empty((dim, dim) + u.grid.shape)
    first = gradient(u)
    for i in range(dim):
        out[i, i] = _second_difference(u.values, i, h)
        for j in range(i + 1, dim):
            mixed = np.gradient(first[i], h, axis=j, edge_order=2)
            out[i, j] = mixed
            out[j, i] = mixed
    return out


def hessian_norm(u: ScalarField) -> NDArray:
    """Frobenius norm of the Hessian, nodewise."""
    H = hessian(u)
    return np.sqrt(np.sum(H * H, axis=(0, 1)))


def laplacian(u: ScalarField) -> ScalarField:
    """Sum of the per-axis second differences."""
    _check_nodes(u, 5)
    total = sum(_second_difference(u.values, axis, u.h) for axis in range(u.grid.dim))
    return u.derived(total, f"lap({u.name})")


@dataclass
class GradientPieces:
    """|grad u|, |D^2 u|^2 and |grad |grad u||^2 computed once and shared."""

    grad: NDArray
    norm: NDArray
    hess_sq: NDArray
    grad_norm_grad: NDArray

    @property
    def grad_norm_grad_sq(self) -> NDArray:
        return np.sum(self.grad_norm_grad**2, axis=0)


def gradient_pieces(u: ScalarField) -> GradientPieces:
    grad = gradient(u)
    norm = np.linalg.norm(grad, axis=0)
    H = hessian(u)
    grad_of_norm = gradient(u.derived(norm, f"|grad {u.name}|"))
    return GradientPieces(grad, norm, np.sum(H * H, axis=(0, 1)), grad_of_norm)


def compute_Qsq(u: ScalarField, grad_floor: float = GRAD_FLOOR) -> ScalarField:
    """(|D^2 u|^2 - |grad |grad u||^2) / |grad u|^2.

    Zero where |grad u| < grad_floor.
    """
    pieces = gradient_pieces(u)
    return u.derived(
        qsq_from_pieces(pieces, grad_floor), f"Qsq({u.name})", grad_floor=grad_floor
    )


def qsq_from_pieces(pieces: GradientPieces, grad_floor: float) -> NDArray:
    active = pieces.norm >= grad_floor
    safe = np.where(active, pieces.norm, 1.0)
    q = (pieces.hess_sq - pieces.grad_norm_grad_sq) / safe**2
    return np.where(active, q, 0.0)


def analysis_mask(
    u: ScalarField,
    band: Optional[Tuple[float, float]] = None,
    grad_floor: Optional[float] = None,
    margin: int = RESIDUAL_MARGIN,
) -> NDArray:
    """Interior nodes, optionally restricted to a u-band and to |grad u| >= floor."""
    mask = u.grid.interior_mask(margin)
    if band is not None:
        mask &= u.band_mask(band)
    if grad_floor is not None:
        mask &= gradient_norm(u) >= grad_floor
    return mask


def check_P_identity(
    u: ScalarField,
    pot: DoubleWellPotential,
    band: Tuple[float, float] = (-0.9, 0.9),
    grad_floor: float = GRAD_FLOOR,
    tolerance: Optional[float] = None,
) -> ResidualStats:
    """Residual of Lap P = (Qsq + W''(u)) P with P = |grad u|."""
    pieces = gradient_pieces(u)
    P = u.derived(pieces.norm, "P")
    lap_P = laplacian(P).values
    qsq = qsq_from_pieces(pieces, grad_floor)
    residual = lap_P - (qsq + pot.Wpp(u.values)) * pieces.norm
    mask = analysis_mask(u, band) & (pieces.norm >= grad_floor)
    if not mask.any():
        raise EmptyRegionError(f"band {band} selects no interior nodes of {u.name}")
    stats = ResidualStats.over("P_identity", residual, mask, tolerance)
    LOGGER.debug("P identity residual on %s nodes: max %s", stats.count, stats.max)
    return stats


def harnack_ratio(u: ScalarField, ball: Ball, band: Tuple[float, float]) -> float:
    """sup |grad u| / inf |grad u| over the ball nodes whose value lies in band."""
    mask = ball.mask(u.grid) & u.band_mask(band)
    if not mask.any():
        raise EmptyRegionError(f"no nodes of the ball have u in {band}")
    norm = gradient_norm(u)[mask]
    if norm.min() <= 0.0:
        return float("inf")
    return float(norm.max() / norm.min())


def oscillation(u: ScalarField, ball: Ball) -> float:
    mask = ball.mask(u.grid, interior=False)
    values = u.values[mask]
    return float(values.max() - values.min())


@dataclass
class GradientEstimate:
    """Per-axis sides of the interior gradient estimate on a cube."""

    lhs_first: NDArray
    rhs_first: NDArray
    lhs_second: NDArray
    rhs_second: NDArray
    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def margin(self) -> float:
        return float(
            min(
                np.min(self.rhs_first - self.lhs_first),
                np.min(self.rhs_second - self.lhs_second),
            )
        )


def interior_gradient_estimate_check(
    u: ScalarField, pot: DoubleWellPotential, x0: ArrayLike, r: float
) -> GradientEstimate:
    """Checks the harmonic-type interior estimates on the cube of half-width r.

    |u_i(x0)| <= (n/r) sup_{dD} |u| + (r/2) sup_D |Lap u|, and for the second
    derivatives |u_ji(x0)| <= (n/r) sup_{dD} |u_i| + (r/2) sup_D |W''(u) u_i|.
    """
    grid = u.grid
    center = grid.nearest_index(x0)
    half = int(round(r / grid.spacing))
    if half < 1:
        raise GridError("cube half-width is below one grid spacing")
    box = []
    for axis, (c, n) in enumerate(zip(center, grid.shape)):
        # the Laplacian on D must not use one-sided stencils
        if c - half < 1 or c + half > n - 2:
            raise GridError(
                f"cube of half-width {r} around {tuple(x0)} "
                f"exceeds the grid on axis {axis}"
            )
        box.append(slice(c - half, c + half + 1))
    box = tuple(box)
    n = grid.dim
    r_nodes = half * grid.spacing

    cube = np.zeros(grid.shape, dtype=bool)
    cube[box] = True
    shell = cube.copy()
    shell[tuple(slice(s.start + 1, s.stop - 1) for s in box)] = False

    grad = gradient(u)
    H = hessian(u)
    lap = laplacian(u).values
    Wpp = pot.Wpp(u.values)

    lhs_first = np.abs(grad[(slice(None),) + center])
    u_max = np.abs(u.values[shell]).max()
    rhs_first = np.full(n, n / r_nodes * u_max + r_nodes / 2 * np.abs(lap[cube]).max())

    lhs_second = np.zeros(n)
    rhs_second = np.zeros(n)
    for i in range(n):
        lhs_second[i] = np.abs(H[(slice(None), i) + center]).max()
        edge = np.abs(grad[i][shell]).max()
        source = np.abs(Wpp[cube] * grad[i][cube]).max()
        rhs_second[i] = n / r_nodes * edge + r_nodes / 2 * source

    violations = [
        f"first derivative, axis {i}" for i in range(n) if lhs_first[i] > rhs_first[i]
    ]
    violations += [
        f"second derivative, axis {i}"
        for i in range(n)
        if lhs_second[i] > rhs_second[i]
    ]
    if violations:
        LOGGER.info("interior gradient estimate fails on %s", ", ".join(violations))
    return GradientEstimate(lhs_first, rhs_first, lhs_second, rhs_second, violations)

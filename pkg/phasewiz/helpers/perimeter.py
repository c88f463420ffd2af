"""Weighted perimeters, integrand conditions, the radius guard and minimality gaps."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

from phasewiz.errors import (
    DomainError,
    EmptyRegionError,
    LevelNotCrossedError,
    MissingLevelSetError,
    RadiusGuardError,
    UndefinedDensityError,
)
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.models.density import LOCAL_KINDS

if TYPE_CHECKING:
    from typing import Dict, List, Optional, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.density import DensityWeight
    from phasewiz.models.diffeomorphism import Diffeomorphism
    from phasewiz.models.field import Ball, ScalarField
    from phasewiz.models.level_set import Competitor, LevelSet

LOGGER = getLogger("phasewiz.perimeter")

HOMOGENEITY_SAMPLES = 100
# central differences in p against the closed-form Hessian
CONVEXITY_TOLERANCE = 1e-3


def weighted_perimeter(surface: LevelSet, weight: DensityWeight, ball: Ball) -> float:
    """Sum of g(centroid) |nu| times the measure of each facet centred in the ball."""
    inside = surface.in_ball(ball)
    if not inside.any():
        return 0.0
    centroids = surface.centroids[inside]
    normals = surface.normals[inside]
    values = weight.G(centroids, normals)
    undefined = ~np.isfinite(values)
    if undefined.any():
        facet = int(np.flatnonzero(inside)[np.argmax(undefined)])
        raise UndefinedDensityError(
            f"{weight.kind} density is undefined at facet {facet} of {surface.name} "
            f"(centroid {tuple(np.round(surface.centroids[facet], 12))})"
        )
    return float(np.sum(values * surface.measures[inside]))


@dataclass
class IntegrandReport:
    """Conditions (a) to (d) for G(x, p) = g(x) |p| on a node set."""

    kind: str
    homogeneity_error: float
    mu0: float
    rescale_factor: float
    convex: bool
    convexity_error: float
    post_rescale_min: float
    lambda_estimate: float
    derivative_bounds: Dict[str, float] = field(default_factory=dict)
    applied: bool = False

    @property
    def passed(self) -> bool:
        return (
            self.homogeneity_error <= 1e-12
            and self.convexity_error <= CONVEXITY_TOLERANCE
            and self.mu0 > 0.0
            and np.isfinite(self.lambda_estimate)
        )


def _tangent_hessian_form(g: NDArray, p: NDArray, xi: NDArray) -> NDArray:
    """xi^T D_p^2 (g |p|) xi = g (|xi|^2 - (xi . p/|p|)^2) / |p|."""
    norm = np.linalg.norm(p, axis=1)
    along = np.sum(xi * p, axis=1) / norm
    return g * (np.sum(xi * xi, axis=1) - along**2) / norm


def check_integrand_conditions(
    weight: DensityWeight,
    band: NDArray,
    seed: int = 0,
    samples: int = HOMOGENEITY_SAMPLES,
    apply_rescale: bool = False,
) -> Tuple[IntegrandReport, DensityWeight]:
    """Checks (a)-(d) on the band nodes; returns the report and the (rescaled) weight.

    (c) holds for g |p| iff g >= 1, so the report carries the factor 1 / min g.
    (d) compares with the area integrand through |g - 1| and finite-difference
    x-derivatives of g up to third order.
    """
    grid = weight.grid
    mask = band & np.isfinite(weight.values)
    if not mask.any():
        raise EmptyRegionError(
            f"{weight.kind}: the band selects no nodes with a defined density"
        )
    g = weight.values[mask]
    if np.any(g <= 0.0):
        raise DomainError(f"{weight.kind} density is not positive on the band")
    rng = np.random.default_rng(seed)
    coords = grid.coordinates().reshape(-1, grid.dim)
    nodes = np.flatnonzero(mask)
    # G interpolates, so a node next to an undefined one has no value
    nodes = nodes[np.isfinite(weight.at(coords[nodes]))]
    if not len(nodes):
        raise EmptyRegionError(f"{weight.kind}: G is undefined on every band node")
    x = coords[rng.choice(nodes, size=samples)]
    p = rng.normal(size=(samples, grid.dim))
    a = rng.uniform(0.1, 10.0, size=samples)

    # (a): G(x, a p) = a G(x, p) through the integrand the perimeter uses
    lhs = weight.G(x, a[:, None] * p)
    rhs = a * weight.G(x, p)
    homogeneity = float(np.max(np.abs(lhs - rhs) / np.maximum(1.0, np.abs(rhs))))

    # (c): compare the closed form of the p-Hessian with central differences in p
    xi = rng.normal(size=(samples, grid.dim))
    step = 1e-4 * np.linalg.norm(p, axis=1, keepdims=True)
    second = (
        weight.G(x, p + step * xi) - 2.0 * weight.G(x, p) + weight.G(x, p - step * xi)
    ) / step[:, 0] ** 2
    closed = _tangent_hessian_form(weight.at(x), p, xi)
    convexity = float(np.max(np.abs(second - closed) / np.maximum(1.0, np.abs(closed))))

    mu0 = float(g.min())
    factor = 1.0 / mu0
    rescaled = weight.rescaled(factor) if apply_rescale else weight
    post = float(rescaled.values[mask].min()) if apply_rescale else mu0 * factor

    # (d): |G - A| and its x-derivatives over the band, for the rescaled density
    values = rescaled.values
    bounds: Dict[str, float] = {"order0": float(np.max(np.abs(values[mask] - 1.0)))}
    layer: List[NDArray] = [values]
    for order in (1, 2, 3):
        nxt: List[NDArray] = []
        for data in layer:
            parts = np.gradient(data, grid.spacing, edge_order=2)
            nxt.extend(parts if grid.dim > 1 else [parts])
        layer = nxt
        inner = mask & grid.interior_mask(order)
        stacked = np.abs(np.stack(layer))[:, inner]
        bounds[f"order{order}"] = float(np.nanmax(stacked)) if stacked.size else 0.0
    lam = max(bounds.values())

    report = IntegrandReport(
        kind=weight.kind,
        homogeneity_error=homogeneity,
        mu0=mu0,
        rescale_factor=factor,
        convex=mu0 >= 1.0,
        convexity_error=convexity,
        post_rescale_min=post,
        lambda_estimate=float(lam),
        derivative_bounds=bounds,
        applied=apply_rescale,
    )
    LOGGER.info(
        "%s integrand: mu0 = %.6g, rescale factor %.6g, Lambda estimate %.6g",
        weight.kind,
        mu0,
        factor,
        lam,
    )
    return report, rescaled


@dataclass
class ConditionReport:
    """Whether the field gets within delta of a well somewhere on the grid."""

    delta: float
    reached: bool
    max_abs: float


def check_condition_325(u: ScalarField, delta: float) -> ConditionReport:
    """Reports whether {|u| > 1 - delta} is nonempty on the grid."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    top = float(np.abs(u.values).max())
    reached = top > 1.0 - delta
    if not reached:
        LOGGER.info(
            "%s stays in |u| <= %.6g < 1 - delta; the d0 level sets are absent",
            u.name,
            top,
        )
    return ConditionReport(delta, reached, top)


@dataclass
class RadiusGuard:
    """d0 and the largest admissible ball radius for the local weights."""

    d0: float
    r_max: float
    levels: Tuple[float, float, float] = (0.0, np.nan, np.nan)
    distances: Tuple[float, float] = (np.inf, np.inf)

    def allows(self, radius: float, kind: str) -> bool:
        return kind not in LOCAL_KINDS or radius < self.r_max

    def check(self, ball: Ball, kind: str) -> None:
        if not self.allows(ball.radius, kind):
            raise RadiusGuardError(
                f"ball radius {ball.radius:.6g} is not below "
                f"r_max = d0 / 2 = {self.r_max:.6g} "
                f"for the local weight {kind}"
            )


def _min_distance(a: LevelSet, b: LevelSet) -> float:
    distance, _ = cKDTree(b.centroids).query(a.centroids, k=1)
    return float(np.min(distance))


def d0_and_radius_guard(
    w: ScalarField, phi: Diffeomorphism, delta: float
) -> RadiusGuard:
    """d0 = min distance from {w = 0} to the levels {w = phi^-1(+-(1 - delta))}."""
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    lo_phi, hi_phi = phi.phi_range
    if not (lo_phi < -1.0 + delta and 1.0 - delta < hi_phi):
        raise MissingLevelSetError(
            f"phi reaches only {phi.phi_range}; "
            f"the levels +-(1 - {delta}) have no preimage"
        )
    upper = float(phi.inverse(1.0 - delta))
    lower = float(phi.inverse(-1.0 + delta))
    try:
        zero = extract_level_set(w, 0.0, "zero")
        top = extract_level_set(w, upper, "upper")
        bottom = extract_level_set(w, lower, "lower")
    except LevelNotCrossedError as err:
        raise MissingLevelSetError(str(err)) from err
    distances = (_min_distance(zero, top), _min_distance(zero, bottom))
    d0 = min(distances)
    LOGGER.info("d0 = %.6g (upper %.6g, lower %.6g)", d0, *distances)
    return RadiusGuard(d0, 0.5 * d0, (0.0, upper, lower), distances)


@dataclass
class GapResult:
    """P(F, ball) - P(E, ball) for one competitor and weight."""

    competitor: str
    weight: str
    gap: float
    tolerance: float
    perimeter_E: float
    perimeter_F: float
    arc_excess: float

    @property
    def passed(self) -> bool:
        return self.gap >= -self.tolerance


def minimality_gap(
    E: LevelSet,
    F: Competitor,
    weight: DensityWeight,
    ball: Ball,
    guard: Optional[RadiusGuard] = None,
    tolerance_factor: float = 10.0,
) -> GapResult:
    """gap = P~(F, ball) - P~(E, ball).

    Passes iff gap >= -tolerance_factor h P~(E, ball).
    """
    if weight.is_local:
        if guard is None:
            raise RadiusGuardError(
                f"the local weight {weight.kind} needs a radius guard"
            )
        guard.check(ball, weight.kind)
    # facets shared by E and F contribute identically to both sums
    before = weighted_perimeter(E, weight, ball)
    after = weighted_perimeter(F.surface, weight, ball)
    tolerance = tolerance_factor * weight.grid.spacing * before
    excess = F.surface.measure_in(ball) - E.measure_in(ball)
    result = GapResult(
        competitor=F.descriptor,
        weight=weight.kind,
        gap=after - before,
        tolerance=tolerance,
        perimeter_E=before,
        perimeter_F=after,
        arc_excess=excess,
    )
    if not result.passed:
        LOGGER.warning(
            "negative gap %.3g for %s with the %s weight",
            result.gap,
            F.descriptor,
            weight.kind,
        )
    return result

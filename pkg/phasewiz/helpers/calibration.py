"""Discrete calibration certificates: the divergence theorem between E and F."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import DomainError
from phasewiz.helpers.calculus import gradient, laplacian
from phasewiz.helpers.transform import sign_agreement, usable_mask

if TYPE_CHECKING:
    from typing import Callable, List, Optional, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.field import Ball, ScalarField
    from phasewiz.models.level_set import Competitor, LevelSet

LOGGER = getLogger("phasewiz.perimeter")

MAX_REFINEMENTS = 6
# symmetric simplex rules as (barycentric points, weights)
TRIANGLE_RULE = (
    np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
    np.full(3, 1.0 / 3.0),
)
_A, _B = 0.5854101966249685, 0.1381966011250105
TET_RULE = (
    np.array([[_A, _B, _B, _B], [_B, _A, _B, _B], [_B, _B, _A, _B], [_B, _B, _B, _A]]),
    np.full(4, 0.25),
)
_G = 0.5 / np.sqrt(3.0)
SEGMENT_RULE = (np.array([[0.5 + _G, 0.5 - _G], [0.5 - _G, 0.5 + _G]]), np.full(2, 0.5))
FACE_RULE = (
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1.0 / 3.0),
)
# children of the midpoint split, indexing parent corners then edge midpoints
_TRIANGLE_CHILDREN = ((0, 3, 5), (3, 1, 4), (5, 4, 2), (3, 4, 5))
_TRIANGLE_EDGES = ((0, 1), (1, 2), (0, 2))
_TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))
# Bey's split: corners 0-3, midpoints 4=01 5=02 6=03 7=12 8=13 9=23
_TET_CHILDREN = (
    (0, 4, 5, 6),
    (4, 1, 7, 8),
    (5, 7, 2, 9),
    (6, 8, 9, 3),
    (4, 5, 6, 8),
    (4, 5, 7, 8),
    (5, 6, 8, 9),
    (5, 7, 8, 9),
)


@dataclass
class CalibrationCertificate:
    """Sign, divergence-theorem and boundary-identity checks for one competitor."""

    competitor: str
    volume_integral: float = 0.0
    flux_difference: float = 0.0
    flux_scale: float = 0.0
    relative_residual: float = 0.0
    tolerance: float = 1e-2
    sign_nodes: int = 0
    sign_tolerance: float = 0.0
    failing: List[Tuple[float, ...]] = field(default_factory=list)
    excluded: int = 0
    boundary_max: float = 0.0
    boundary_tolerance: float = 0.0
    # informational: |X . nu_F| <= |X| holds by Cauchy-Schwarz
    bound_excess: float = 0.0
    trivial: bool = False
    failing_mask: Optional[NDArray] = field(default=None, repr=False)

    @property
    def divergence_passed(self) -> bool:
        return self.relative_residual <= self.tolerance

    @property
    def sign_passed(self) -> bool:
        return not self.failing

    @property
    def boundary_passed(self) -> bool:
        return self.boundary_max <= self.boundary_tolerance

    @property
    def passed(self) -> bool:
        return self.divergence_passed and self.sign_passed and self.boundary_passed


def swept_simplices(
    E: LevelSet, F: LevelSet, facets: NDArray
) -> Tuple[NDArray, NDArray]:
    """Simplices filling the region between E and F over the given facets.

    Returns corners with shape (n, dim + 1, dim) and signed measures, positive
    where F lies on the side of E its geometric normal points to.
    """
    base = E.vertices[E.facets[facets]]
    top = F.vertices[F.facets[facets]]
    if E.dim == 2:
        a, b = base[:, 0], base[:, 1]
        a2, b2 = top[:, 0], top[:, 1]
        corners = np.concatenate(
            [np.stack([a, b, b2], axis=1), np.stack([a, b2, a2], axis=1)]
        )
        edge1 = corners[:, 1] - corners[:, 0]
        edge2 = corners[:, 2] - corners[:, 0]
        signed = -0.5 * (edge1[:, 0] * edge2[:, 1] - edge1[:, 1] * edge2[:, 0])
    else:
        a, b, c = base[:, 0], base[:, 1], base[:, 2]
        a2, b2, c2 = top[:, 0], top[:, 1], top[:, 2]
        corners = np.concatenate(
            [
                np.stack([a, b, c, a2], axis=1),
                np.stack([b, c, a2, b2], axis=1),
                np.stack([c, a2, b2, c2], axis=1),
            ]
        )
        edges = corners[:, 1:] - corners[:, :1]
        signed = np.linalg.det(edges) / 6.0
    keep = signed != 0.0
    return corners[keep], signed[keep]


def _diameters(corners: NDArray) -> NDArray:
    n = corners.shape[1]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    lengths = [np.linalg.norm(corners[:, i] - corners[:, j], axis=1) for i, j in pairs]
    return np.max(lengths, axis=0)


def refine_simplices(
    corners: NDArray, signed: NDArray, max_diameter: float
) -> Tuple[NDArray, NDArray]:
    """Midpoint subdivision until every simplex has diameter at most max_diameter."""
    dim = corners.shape[2]
    if dim == 2:
        edges, children = _TRIANGLE_EDGES, _TRIANGLE_CHILDREN
    else:
        edges, children = _TET_EDGES, _TET_CHILDREN
    for _ in range(MAX_REFINEMENTS):
        coarse = _diameters(corners) > max_diameter
        if not coarse.any():
            break
        parents = corners[coarse]
        mids = np.stack(
            [0.5 * (parents[:, i] + parents[:, j]) for i, j in edges], axis=1
        )
        points = np.concatenate([parents, mids], axis=1)
        split = np.concatenate([points[:, list(child)] for child in children])
        corners = np.concatenate([corners[~coarse], split])
        signed = np.concatenate(
            [signed[~coarse], np.tile(signed[coarse] / 2**dim, len(children))]
        )
    return corners, signed


def _nodes_in_simplices(grid_points: NDArray, corners: NDArray) -> NDArray:
    """Indices of the grid points lying in at least one of the simplices."""
    found = np.zeros(len(grid_points), dtype=bool)
    for simplex in corners:
        lo, hi = simplex.min(axis=0), simplex.max(axis=0)
        box = np.all((grid_points >= lo) & (grid_points <= hi), axis=1)
        if not box.any():
            continue
        candidates = grid_points[box]
        matrix = (simplex[1:] - simplex[0]).T
        if abs(np.linalg.det(matrix)) < 1e-300:
            continue
        lam = np.linalg.solve(matrix, (candidates - simplex[0]).T).T
        inside = np.all(lam >= -1e-12, axis=1) & (lam.sum(axis=1) <= 1.0 + 1e-12)
        found[np.flatnonzero(box)[inside]] = True
    return found


def _facet_flux(
    surface: LevelSet, facets: NDArray, X: Callable[[NDArray], NDArray]
) -> Tuple[float, float]:
    """Sum of X . nu over the facets and the sum of |X . nu|, by Gauss rules."""
    if not len(facets):
        return 0.0, 0.0
    corners = surface.vertices[surface.facets[facets]]
    bary, weights = SEGMENT_RULE if surface.dim == 2 else FACE_RULE
    normals = surface.geometric_normals[facets]
    measures = surface.measures[facets]
    signed = np.zeros(len(facets))
    absolute = np.zeros(len(facets))
    for lam, weight in zip(bary, weights):
        points = np.einsum("k,nkd->nd", lam, corners)
        dot = np.sum(X(points) * normals, axis=1)
        signed += weight * dot
        absolute += weight * np.abs(dot)
    return float(np.sum(signed * measures)), float(np.sum(absolute * measures))


def divergence_certificate(
    w: ScalarField,
    E: LevelSet,
    F: Competitor,
    ball: Ball,
    tolerance: float = 1e-2,
    sign_tolerance: Optional[float] = None,
    boundary_factor: float = 10.0,
) -> CalibrationCertificate:
    """Checks the calibration of E by X = grad w against the competitor F.

    The region between E and F is filled with simplices swept from the modified
    facets; the volume integral of div X = Lap w over it is compared with the
    flux of X through F minus the flux through E.
    """
    grid = w.grid
    if E.dim != grid.dim:
        raise DomainError(
            f"{E.name} is {E.dim}D but {w.name} lives on a {grid.dim}D grid"
        )
    sign_tolerance = 10.0 * w.h if sign_tolerance is None else sign_tolerance
    certificate = CalibrationCertificate(
        F.descriptor,
        tolerance=tolerance,
        sign_tolerance=sign_tolerance,
        boundary_tolerance=boundary_factor * w.h,
    )

    grad = gradient(w)
    components = [w.interpolator(grad[axis]) for axis in range(grid.dim)]

    def X(points: NDArray) -> NDArray:
        return np.stack([c(points) for c in components], axis=1)

    # X . nu = |X| on the facets of E in the ball
    inside = E.in_ball(ball)
    if inside.any():
        at = X(E.centroids[inside])
        along = np.sum(at * E.geometric_normals[inside], axis=1)
        excess = np.abs(along - np.linalg.norm(at, axis=1))
        certificate.boundary_max = float(np.max(excess))

    if F.is_identity:
        certificate.trivial = True
        return certificate

    modified = np.flatnonzero(F.modified)
    at = X(F.surface.centroids[modified])
    along = np.abs(np.sum(at * F.surface.geometric_normals[modified], axis=1))
    certificate.bound_excess = float(np.max(along - np.linalg.norm(at, axis=1)))

    # divergence theorem over the swept region
    coarse, signed = swept_simplices(E, F.surface, modified)
    volume = 0.0
    if len(coarse):
        corners, signed = refine_simplices(coarse, signed, 2.0 * w.h)
        div = w.interpolator(laplacian(w).values)
        bary, weights = TRIANGLE_RULE if grid.dim == 2 else TET_RULE
        for lam, weight in zip(bary, weights):
            points = np.einsum("k,nkd->nd", lam, corners)
            volume += weight * float(np.sum(signed * div(points)))
    flux_F, scale_F = _facet_flux(F.surface, modified, X)
    flux_E, scale_E = _facet_flux(E, modified, X)
    flux = flux_F - flux_E
    scale = scale_F + scale_E
    certificate.volume_integral = volume
    certificate.flux_difference = flux
    certificate.flux_scale = scale
    # relative to the net flux, floored at h^2 times the absolute flux
    net = max(abs(flux), abs(volume), w.h**2 * scale)
    certificate.relative_residual = abs(volume - flux) / net if net > 0.0 else 0.0

    # Lap w has the sign of w on the grid nodes of the region
    flat = grid.coordinates().reshape(-1, grid.dim)
    region = _nodes_in_simplices(flat, coarse).reshape(grid.shape)
    region &= ball.contains(grid.coordinates())
    usable = usable_mask(w)
    certificate.excluded = int((region & ~usable).sum())
    region &= usable
    bad = region & ~sign_agreement(w, sign_tolerance)
    certificate.sign_nodes = int(region.sum())
    certificate.failing = [tuple(float(c) for c in p) for p in grid.coordinates()[bad]]
    certificate.failing_mask = bad

    if not certificate.passed:
        LOGGER.warning(
            "calibration of %s against %s: residual %.3g, %s failing sign nodes, "
            "boundary identity %.3g",
            E.name,
            F.descriptor,
            certificate.relative_residual,
            len(certificate.failing),
            certificate.boundary_max,
        )
    return certificate

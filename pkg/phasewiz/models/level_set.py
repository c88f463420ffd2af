"""Model objects for extracted level sets and the competitors built from them."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import DomainError

if TYPE_CHECKING:
    from typing import Any, Dict, Optional

    from numpy.typing import NDArray

    from phasewiz.models.field import Ball, Grid

LOGGER = getLogger("phasewiz.perimeter")

UNIT_TOL = 1e-10


def _geometric_normals(vertices: NDArray, facets: NDArray) -> NDArray:
    """Unnormalized facet normals.

    rot(q - p) for segments and (b - a) x (c - a) for triangles.
    """
    if facets.shape[1] == 2:
        edge = vertices[facets[:, 1]] - vertices[facets[:, 0]]
        return np.stack([edge[:, 1], -edge[:, 0]], axis=1)
    a, b, c = (vertices[facets[:, k]] for k in range(3))
    return np.cross(b - a, c - a)


@dataclass
class LevelSet:
    """An oriented polyline (2D) or triangle mesh (3D).

    Geometric normals point from {w < level} into {w > level}. `normals` holds
    the unit normals used for evaluation; for extracted sets they come from the
    interpolated gradient of the field, for competitors they are geometric.
    """

    vertices: NDArray
    facets: NDArray
    normals: NDArray
    level: float = 0.0
    name: str = "E"
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.facets = np.asarray(self.facets, dtype=int)
        self.normals = np.asarray(self.normals, dtype=float)
        dim = self.vertices.shape[1]
        if dim not in (2, 3):
            raise DomainError(f"level sets live in 2 or 3 dimensions, got {dim}")
        if self.facets.shape[1] != dim:
            raise DomainError(f"{dim}D facets need {dim} vertices each")
        if self.normals.shape != (len(self.facets), dim):
            raise DomainError("one normal per facet is required")
        lengths = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(lengths - 1.0) > UNIT_TOL):
            raise DomainError("level set normals must have unit length")

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def __len__(self) -> int:
        return len(self.facets)

    @cached_property
    def centroids(self) -> NDArray:
        return self.vertices[self.facets].mean(axis=1)

    @cached_property
    def measures(self) -> NDArray:
        """Segment lengths in 2D, triangle areas in 3D."""
        raw = np.linalg.norm(_geometric_normals(self.vertices, self.facets), axis=1)
        return raw if self.dim == 2 else 0.5 * raw

    @cached_property
    def geometric_normals(self) -> NDArray:
        raw = _geometric_normals(self.vertices, self.facets)
        length = np.linalg.norm(raw, axis=1, keepdims=True)
        # degenerate facets keep the stored normal
        safe = np.where(length > 0.0, length, 1.0)
        return np.where(length > 0.0, raw / safe, self.normals)

    @property
    def total_measure(self) -> float:
        return float(self.measures.sum())

    def in_ball(self, ball: Ball, scale: float = 1.0) -> NDArray:
        """Facets whose centroid lies in the (scaled) ball."""
        return ball.contains(self.centroids, scale)

    def measure_in(self, ball: Ball) -> float:
        return float(self.measures[self.in_ball(ball)].sum())

    def vertex_degrees(self) -> NDArray:
        return np.bincount(self.facets.ravel(), minlength=len(self.vertices))

    def open_ends(self) -> NDArray:
        """Indices of polyline vertices used by a single facet."""
        if self.dim != 2:
            raise DomainError("open ends are defined for polylines only")
        return np.flatnonzero(self.vertex_degrees() == 1)

    def is_terminated(self, grid: Grid, tolerance: Optional[float] = None) -> bool:
        """True when every open end of the polyline lies on the grid box boundary."""
        tolerance = 1e-9 * grid.spacing if tolerance is None else tolerance
        ends = self.vertices[self.open_ends()]
        if len(ends) == 0:
            return True
        on_face = np.zeros(len(ends), dtype=bool)
        for axis, (lo, hi) in enumerate(grid.extents):
            on_face |= np.abs(ends[:, axis] - lo) <= tolerance
            on_face |= np.abs(ends[:, axis] - hi) <= tolerance
        return bool(on_face.all())

    def with_vertices(
        self,
        vertices: NDArray,
        name: str,
        moved: Optional[NDArray] = None,
        **metadata: Any,
    ) -> LevelSet:
        """Same facets over new vertices; the `moved` facets get geometric normals."""
        surface = LevelSet(
            vertices,
            self.facets,
            self.normals,
            level=self.level,
            name=name,
            metadata=dict(metadata),
        )
        moved = np.ones(len(self), dtype=bool) if moved is None else moved
        geometric = surface.geometric_normals
        surface.normals = np.where(moved[:, None], geometric, self.normals)
        return surface


@dataclass
class Competitor:
    """A set F that coincides with E outside a sub-ball of its support ball."""

    surface: LevelSet
    ball: Ball
    descriptor: str
    modified: NDArray
    support_scale: float = 0.9
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def is_identity(self) -> bool:
        return not bool(np.any(self.modified))

    def displacement(self, base: LevelSet) -> NDArray:
        return self.surface.vertices - base.vertices

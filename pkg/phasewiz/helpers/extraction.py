"""Level-set extraction: marching squares in 2D, marching tetrahedra in 3D."""

from __future__ import annotations

from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np

from phasewiz.errors import DomainError, LevelNotCrossedError
from phasewiz.helpers.calculus import gradient
from phasewiz.models.level_set import LevelSet

if TYPE_CHECKING:
    from typing import Dict, Hashable, List, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.field import ScalarField

LOGGER = getLogger("phasewiz.perimeter")

# corners of a square cell in cyclic order, as index offsets
SQUARE = ((0, 0), (1, 0), (1, 1), (0, 1))
# Kuhn split of the unit cube along its main diagonal, corners as bit offsets
CUBE_TETS = (
    (0, 1, 3, 7),
    (0, 3, 2, 7),
    (0, 2, 6, 7),
    (0, 6, 4, 7),
    (0, 4, 5, 7),
    (0, 5, 1, 7),
)


class _VertexTable:
    """Edge-keyed vertex store, so neighbouring cells share crossing points."""

    def __init__(self, values: NDArray, grid_axes: List[NDArray], level: float) -> None:
        self.values = values
        self.axes = grid_axes
        self.level = level
        self.index: Dict[Hashable, int] = {}
        self.points: List[NDArray] = []

    def node(self, idx: Tuple[int, ...]) -> NDArray:
        return np.array([ax[i] for ax, i in zip(self.axes, idx)])

    def crossing(self, a: Tuple[int, ...], b: Tuple[int, ...]) -> int:
        fa, fb = self.values[a], self.values[b]
        t = (self.level - fa) / (fb - fa)
        if t <= 0.0:
            key: Hashable = a
            point = self.node(a)
        elif t >= 1.0:
            key = b
            point = self.node(b)
        else:
            key = (a, b) if a < b else (b, a)
            point = self.node(a) + t * (self.node(b) - self.node(a))
        if key not in self.index:
            self.index[key] = len(self.points)
            self.points.append(point)
        return self.index[key]


def _orient(
    facet: List[int], points: List[NDArray], nodes: List[NDArray], weights: List[float]
) -> List[int]:
    """Reorders a facet so its geometric normal agrees with sum w_k (node_k - centre).

    With weights f_k - level every term is nonnegative for the correct
    orientation, so facets passing through grid nodes are oriented too.
    """
    p = [points[k] for k in facet]
    if len(facet) == 2:
        edge = p[1] - p[0]
        normal = np.array([edge[1], -edge[0]])
    else:
        normal = np.cross(p[1] - p[0], p[2] - p[0])
    centre = np.mean(p, axis=0)
    reference = sum(wk * (nk - centre) for nk, wk in zip(nodes, weights))
    if np.dot(normal, reference) < 0.0:
        facet = facet[::-1] if len(facet) == 2 else [facet[0], facet[2], facet[1]]
    return facet


def _march_squares(values: NDArray, table: _VertexTable) -> List[List[int]]:
    level = table.level
    above = values >= level
    nx, ny = values.shape
    count = sum(above[i : i + nx - 1, j : j + ny - 1].astype(int) for i, j in SQUARE)
    active = np.argwhere((count > 0) & (count < 4))
    facets: List[List[int]] = []
    for i, j in active:
        idx = [(i + di, j + dj) for di, dj in SQUARE]
        pos = [bool(above[k]) for k in idx]
        nodes = [table.node(k) for k in idx]
        crossing = [
            (idx[e], idx[(e + 1) % 4]) for e in range(4) if pos[e] != pos[(e + 1) % 4]
        ]
        if len(crossing) == 2:
            pairs = [(crossing[0], crossing[1])]
            refs = [(nodes, [values[k] - level for k in idx])]
        else:
            centre = np.mean([values[k] for k in idx])
            # saddle: cut off the corners that are not joined through the centre
            cut = [e for e in range(4) if pos[e] != (centre >= level)]
            pairs, refs = [], []
            for e in cut:
                pairs.append(((idx[(e - 1) % 4], idx[e]), (idx[e], idx[(e + 1) % 4])))
                anchor = nodes[e] if pos[e] else nodes[(e + 1) % 4]
                refs.append(([anchor], [1.0]))
        for (ea, eb), (ref_nodes, ref_weights) in zip(pairs, refs):
            facet = [table.crossing(*ea), table.crossing(*eb)]
            if facet[0] == facet[1]:
                continue
            facets.append(_orient(facet, table.points, ref_nodes, ref_weights))
    return facets


def _march_tetrahedra(values: NDArray, table: _VertexTable) -> List[List[int]]:
    level = table.level
    above = values >= level
    nx, ny, nz = values.shape
    offsets = [((k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1) for k in range(8)]
    shifted = [
        values[a : a + nx - 1, b : b + ny - 1, c : c + nz - 1] for a, b, c in offsets
    ]
    lo, hi = np.minimum.reduce(shifted), np.maximum.reduce(shifted)
    active = np.argwhere((hi >= level) & (lo < level))
    facets: List[List[int]] = []
    for i, j, k in active:
        cube = [(i + a, j + b, k + c) for a, b, c in offsets]
        for tet in CUBE_TETS:
            corners = [cube[t] for t in tet]
            pos = [n for n in corners if above[n]]
            neg = [n for n in corners if not above[n]]
            if not pos or not neg:
                continue
            if len(pos) == 1 or len(neg) == 1:
                lone, rest = (pos[0], neg) if len(pos) == 1 else (neg[0], pos)
                tris = [[table.crossing(lone, r) for r in rest]]
            else:
                a, b = pos
                c, d = neg
                ac, ad = table.crossing(a, c), table.crossing(a, d)
                bc, bd = table.crossing(b, c), table.crossing(b, d)
                tris = [[ac, ad, bd], [ac, bd, bc]]
            ref_nodes = [table.node(n) for n in corners]
            ref_weights = [values[n] - level for n in corners]
            for tri in tris:
                if len(set(tri)) < 3:
                    continue
                facets.append(_orient(tri, table.points, ref_nodes, ref_weights))
    return facets


def extract_level_set(w: ScalarField, level: float = 0.0, name: str = "E") -> LevelSet:
    """The oriented level set {w = level}, normals from the interpolated gradient."""
    grid = w.grid
    if grid.dim not in (2, 3):
        raise DomainError("level sets are extracted on 2D and 3D grids only")
    values = w.values
    if not values.min() < level < values.max():
        raise LevelNotCrossedError(
            f"{w.name} takes values in [{values.min():.6g}, {values.max():.6g}]; "
            f"level {level} is not crossed"
        )
    table = _VertexTable(values, grid.axes, level)
    facets = (_march_squares if grid.dim == 2 else _march_tetrahedra)(values, table)
    vertices = np.array(table.points)
    facets_arr = np.array(facets, dtype=int).reshape(-1, grid.dim)

    placeholder = np.eye(grid.dim)[np.zeros(len(facets_arr), dtype=int)]
    raw = LevelSet(vertices, facets_arr, placeholder)
    # drop facets of zero measure
    keep = raw.measures > 1e-14 * grid.spacing ** (grid.dim - 1)
    facets_arr = facets_arr[keep]
    geometric = raw.geometric_normals[keep]
    centroids = raw.centroids[keep]

    grad = gradient(w)
    sampled = np.stack(
        [w.interpolator(grad[axis])(centroids) for axis in range(grid.dim)], axis=1
    )
    length = np.linalg.norm(sampled, axis=1, keepdims=True)
    usable = (length[:, 0] > 0.0) & (np.sum(sampled * geometric, axis=1) > 0.0)
    unit = sampled / np.where(length > 0.0, length, 1.0)
    normals = np.where(usable[:, None], unit, geometric)
    if not usable.all():
        LOGGER.debug("%s facets fell back to geometric normals", int((~usable).sum()))

    surface = LevelSet(
        vertices,
        facets_arr,
        normals,
        level=level,
        name=name,
        metadata={"field": w.name, "spacing": grid.spacing},
    )
    LOGGER.info(
        "Extracted {%s = %s}: %s facets, total measure %.6g",
        w.name,
        level,
        len(surface),
        surface.total_measure,
    )
    return surface

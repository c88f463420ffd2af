"""Seeded competitor families for the minimality gaps."""

from __future__ import annotations

from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.spatial import cKDTree

from phasewiz.errors import DomainError, EmptyRegionError
from phasewiz.models.level_set import Competitor

if TYPE_CHECKING:
    from typing import Dict, List, Optional, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.field import Ball
    from phasewiz.models.level_set import LevelSet

LOGGER = getLogger("phasewiz.perimeter")

SUPPORT_SCALE = 0.9
CENTER_SCALE = 0.6
RHO_RANGE = (0.3, 0.6)
MAX_HALVINGS = 20


def bump(s: NDArray) -> NDArray:
    """exp(1 - 1/(1 - s^2)) on |s| < 1, zero elsewhere; equals 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _modified_facets(E: LevelSet, vertices: NDArray) -> NDArray:
    moved = np.any(vertices != E.vertices, axis=1)
    return np.any(moved[E.facets], axis=1)


def identity_competitor(E: LevelSet, ball: Ball) -> Competitor:
    """F = E."""
    surface = E.with_vertices(
        E.vertices.copy(), "identity", moved=np.zeros(len(E), dtype=bool)
    )
    return Competitor(
        surface, ball, "identity", np.zeros(len(E), dtype=bool), SUPPORT_SCALE
    )


def bump_competitor(
    E: LevelSet,
    ball: Ball,
    center: NDArray,
    rho: float,
    amplitude: float,
    normal: NDArray,
    descriptor: str,
) -> Competitor:
    """Moves every vertex z of E by amplitude * bump(|z - center| / rho) * normal."""
    offsets = np.linalg.norm(E.vertices - center, axis=1) / rho
    vertices = E.vertices + amplitude * bump(offsets)[:, None] * normal
    modified = _modified_facets(E, vertices)
    surface = E.with_vertices(vertices, descriptor, moved=modified)
    params = {
        "center": tuple(float(c) for c in center),
        "rho": float(rho),
        "amplitude": float(amplitude),
        "normal": tuple(float(c) for c in normal),
    }
    return Competitor(surface, ball, descriptor, modified, SUPPORT_SCALE, params)


def _chain_through(E: LevelSet, start: int, inside: NDArray) -> Optional[List[int]]:
    """The run of polyline vertices inside the sub-ball that passes through `start`."""
    neighbours: Dict[int, List[int]] = {}
    for a, b in E.facets:
        neighbours.setdefault(int(a), []).append(int(b))
        neighbours.setdefault(int(b), []).append(int(a))

    def walk(previous: int, current: int) -> List[int]:
        path = []
        while inside[current]:
            path.append(current)
            following = [n for n in neighbours.get(current, []) if n != previous]
            if not following or following[0] == start:
                return []
            previous, current = current, following[0]
        return path

    ends = neighbours.get(start, [])
    if len(ends) != 2:
        return None
    forward = walk(start, ends[0])
    backward = walk(start, ends[1])
    if not forward or not backward:
        # closed loop inside the sub-ball, or the chain stops inside it
        return None
    return backward[::-1] + [start] + forward


def chord_competitor(E: LevelSet, ball: Ball) -> Optional[Competitor]:
    """Replaces the part of a polyline inside the sub-ball by the straight chord."""
    if E.dim != 2:
        return None
    sub = ball.radius * SUPPORT_SCALE
    inside = np.linalg.norm(E.vertices - ball.center_array, axis=1) < sub
    if not inside.any():
        return None
    candidates = np.flatnonzero(inside)
    offsets = np.linalg.norm(E.vertices[candidates] - ball.center_array, axis=1)
    start = int(candidates[np.argmin(offsets)])
    chain = _chain_through(E, start, inside)
    if chain is None or len(chain) < 3:
        LOGGER.debug("no open chain through the sub-ball; skipping the chord")
        return None
    points = E.vertices[chain]
    steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(steps)])
    fraction = arc / arc[-1]
    vertices = E.vertices.copy()
    vertices[chain[1:-1]] = points[0] + fraction[1:-1, None] * (points[-1] - points[0])
    modified = _modified_facets(E, vertices)
    surface = E.with_vertices(vertices, "chord", moved=modified)
    params = {
        "start": tuple(float(c) for c in points[0]),
        "end": tuple(float(c) for c in points[-1]),
        "vertices": len(chain),
    }
    return Competitor(surface, ball, "chord", modified, SUPPORT_SCALE, params)


def generate_competitors(
    E: LevelSet,
    ball: Ball,
    count: int,
    seed: int,
    amplitude: Tuple[float, float] = (0.05, 0.2),
    chord: bool = True,
) -> List[Competitor]:
    """The zero perturbation, `count` seeded bumps and, in 2D, the chord competitor.

    Bump centers are vertices of E near the ball centre, bump radii and
    amplitudes are drawn so that every moved vertex stays in the 0.9 sub-ball.
    Amplitudes are fractions of the ball radius.
    """
    if count < 0:
        raise DomainError(f"competitor count must be nonnegative, got {count}")
    lo, hi = amplitude
    if not 0.0 <= lo <= hi:
        raise DomainError(
            f"amplitude range must satisfy 0 <= min <= max, got {amplitude}"
        )
    sub = SUPPORT_SCALE * ball.radius
    if not E.in_ball(ball, SUPPORT_SCALE).any():
        raise EmptyRegionError(
            f"{E.name} has no facets inside the {SUPPORT_SCALE} sub-ball "
            f"of the ball at {ball.center} with radius {ball.radius}"
        )
    center = ball.center_array
    distance = np.linalg.norm(E.vertices - center, axis=1)
    near = np.flatnonzero(distance <= CENTER_SCALE * sub)
    if not len(near):
        near = np.flatnonzero(distance < sub)
    tree = cKDTree(E.centroids)

    rng = np.random.default_rng(seed)
    competitors = [identity_competitor(E, ball)]
    for k in range(count):
        z0 = E.vertices[rng.choice(near)]
        room = 0.98 * (sub - float(np.linalg.norm(z0 - center)))
        rho = min(rng.uniform(*RHO_RANGE) * sub, room)
        size = rng.uniform(lo, hi) * ball.radius * rng.choice((-1.0, 1.0))
        _, nearest = tree.query(z0)
        normal = E.normals[nearest]
        for _ in range(MAX_HALVINGS):
            candidate = bump_competitor(E, ball, z0, rho, size, normal, f"bump-{k:03d}")
            shift = np.any(candidate.displacement(E) != 0.0, axis=1)
            moved = candidate.surface.vertices[shift]
            if np.all(np.linalg.norm(moved - center, axis=1) < sub):
                break
            size *= 0.5
        else:
            LOGGER.warning(
                "%s left the sub-ball after %s halvings",
                candidate.descriptor,
                MAX_HALVINGS,
            )
            continue
        competitors.append(candidate)
    if chord:
        shortcut = chord_competitor(E, ball)
        if shortcut is not None:
            competitors.append(shortcut)
    LOGGER.info(
        "Generated %s competitors for %s in the ball at %s (seed %s)",
        len(competitors),
        E.name,
        ball.center,
        seed,
    )
    return competitors

import numpy as np
import pytest

from phasewiz.errors import DomainError, EmptyRegionError
from phasewiz.helpers.competitors import (
    SUPPORT_SCALE,
    bump,
    bump_competitor,
    chord_competitor,
    generate_competitors,
    identity_competitor,
)
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.helpers.perimeter import minimality_gap
from phasewiz.models.density import unit_weight
from phasewiz.models.field import Ball, Grid, ScalarField


@pytest.fixture(scope="module")
def E(front):
    return extract_level_set(front)


@pytest.fixture(scope="module")
def circle():
    grid = Grid.cube(2, -2.0, 2.0, 1.0 / 32.0)
    x = grid.coordinates()
    return grid, extract_level_set(ScalarField(grid, np.linalg.norm(x, axis=-1) - 1.0))


def test_bump_profile():
    s = np.array([-1.5, -1.0, 0.0, 0.5, 1.0])
    values = bump(s)
    assert values[2] == 1.0
    assert values[0] == values[1] == values[4] == 0.0
    assert 0.0 < values[3] < 1.0


def test_identity_competitor(E, ball):
    F = identity_competitor(E, ball)
    assert F.is_identity
    assert np.array_equal(F.surface.vertices, E.vertices)
    assert np.array_equal(F.surface.normals, E.normals)


def test_bump_lengthens_a_straight_front(E, ball):
    centre = np.asarray(ball.center)
    F = bump_competitor(E, ball, centre, 0.2, 0.2 * ball.radius, E.normals[0], "bump")
    assert not F.is_identity
    assert F.surface.measure_in(ball) > E.measure_in(ball)


def test_competitors_keep_their_support(E, ball):
    competitors = generate_competitors(E, ball, 40, seed=3)
    sub = SUPPORT_SCALE * ball.radius
    centre = np.asarray(ball.center)
    for F in competitors:
        shift = np.any(F.displacement(E) != 0.0, axis=1)
        far = np.linalg.norm(E.vertices - centre, axis=1) >= sub
        assert not (shift & far).any()
        assert np.all(np.linalg.norm(F.surface.vertices[shift] - centre, axis=1) < sub)
        # untouched facets keep the extracted normals exactly
        assert np.array_equal(F.surface.normals[~F.modified], E.normals[~F.modified])


def test_family_layout_and_seeding(E, ball):
    first = generate_competitors(E, ball, 10, seed=7)
    again = generate_competitors(E, ball, 10, seed=7)
    other = generate_competitors(E, ball, 10, seed=8)
    assert first[0].descriptor == "identity"
    assert first[-1].descriptor == "chord"
    assert len(first) == 12
    assert [F.params for F in first] == [F.params for F in again]
    assert [F.params for F in first[1:-1]] != [F.params for F in other[1:-1]]


def test_chord_shortcuts_a_circle(circle):
    grid, E = circle
    ball = Ball((1.0, 0.0), 0.3)
    F = chord_competitor(E, ball)
    assert F is not None
    # the circle is not area minimizing, so the chord wins
    gap = minimality_gap(E, F, unit_weight(grid), ball)
    assert gap.gap < 0.0


def test_chord_is_skipped_without_an_open_chain(circle):
    _, E = circle
    assert chord_competitor(E, Ball((0.0, 0.0), 2.0)) is None


def test_three_dimensional_family():
    grid = Grid.cube(3, 0.0, 1.0, 1.0 / 16.0)
    x = grid.coordinates()
    plane = extract_level_set(ScalarField(grid, x[..., 2] - 0.52, "plane"))
    ball = Ball((0.5, 0.5, 0.5), 0.3)
    competitors = generate_competitors(plane, ball, 5, seed=1)
    assert len(competitors) == 6
    area = unit_weight(grid)
    for F in competitors[1:]:
        assert minimality_gap(plane, F, area, ball).gap > 0.0


def test_generation_rejects(E):
    with pytest.raises(EmptyRegionError):
        generate_competitors(E, Ball((0.05, 0.95), 0.03), 5, seed=0)
    with pytest.raises(DomainError):
        generate_competitors(E, Ball((0.5, 0.5), 0.25), -1, seed=0)
    with pytest.raises(DomainError):
        generate_competitors(E, Ball((0.5, 0.5), 0.25), 5, seed=0, amplitude=(0.3, 0.1))

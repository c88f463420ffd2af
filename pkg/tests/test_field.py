import numpy as np
import pytest
from conftest import DIRECTION, H

from phasewiz.errors import DomainError, EmptyRegionError, GridError
from phasewiz.helpers.calculus import (
    analysis_mask,
    check_P_identity,
    compute_Qsq,
    gradient,
    gradient_norm,
    harnack_ratio,
    hessian,
    hessian_norm,
    interior_gradient_estimate_check,
    laplacian,
    oscillation,
)
from phasewiz.models.field import Ball, Grid, ScalarField
from phasewiz.models.potential import polynomial_potential
from phasewiz.models.profile import planar_solution


@pytest.fixture
def square():
    return Grid.cube(2, -2.0, 2.0, 1.0 / 16.0)


def field_of(grid, function, name="u"):
    x = grid.coordinates()
    return ScalarField(grid, function(x), name)


@pytest.mark.parametrize(
    "extents, spacing",
    [
        (((0.0, 1.0),) * 4, 0.125),  # four axes
        (((0.0, 1.0),), 0.25),  # five nodes
        (((0.0, 1.0),), 0.3),  # not a multiple of h
        (((0.0, 1.0),), 0.0),
    ],
)
def test_grid_rejects(extents, spacing):
    with pytest.raises(GridError):
        Grid(extents, spacing)


def test_grid_shape_and_coordinates():
    grid = Grid.cube(3, 0.0, 1.0, 0.125)
    assert grid.shape == (9, 9, 9)
    assert grid.coordinates().shape == (9, 9, 9, 3)
    assert grid.interior_mask().sum() == 7**3
    assert grid.boundary_mask().sum() == 9**3 - 7**3


def test_field_rejects_bad_values(square):
    values = np.zeros(square.shape)
    values[3, 3] = np.nan
    with pytest.raises(DomainError):
        ScalarField(square, values)
    with pytest.raises(GridError):
        ScalarField(square, np.zeros((4, 4)))


def test_ball_outside_the_grid(square):
    with pytest.raises(EmptyRegionError):
        Ball((10.0, 10.0), 0.5).mask(square)


def test_field_file_is_bit_exact(tmp_path, front):
    path = front.dump(tmp_path / "front.txt")
    loaded = ScalarField.load(path)
    assert loaded.grid == front.grid
    assert np.array_equal(loaded.values, front.values)
    assert loaded.name == front.name


def test_gradient_of_constant_and_linear(square):
    constant = field_of(square, lambda x: np.full(x.shape[:-1], 3.0))
    assert np.all(gradient(constant) == 0.0)
    linear = field_of(square, lambda x: 0.3 * x[..., 0] - 1.2 * x[..., 1])
    grad = gradient(linear)
    assert grad[0] == pytest.approx(np.full(square.shape, 0.3), abs=1e-12)
    assert grad[1] == pytest.approx(np.full(square.shape, -1.2), abs=1e-12)
    assert np.max(hessian_norm(linear)) < 1e-10


def test_quadratic_hessian_and_laplacian():
    grid = Grid.cube(3, -1.0, 1.0, 0.125)
    quadratic = field_of(grid, lambda x: 0.5 * np.sum(x * x, axis=-1))
    inner = grid.interior_mask()
    H3 = hessian(quadratic)
    for i in range(3):
        for j in range(3):
            expected = 1.0 if i == j else 0.0
            assert H3[i, j][inner] == pytest.approx(expected, abs=1e-10)
    assert laplacian(quadratic).values[inner] == pytest.approx(3.0, abs=1e-10)


def test_front_gradient_on_the_zero_level_set(front):
    norm = gradient_norm(front)
    near = analysis_mask(front) & (np.abs(front.values) < 0.5 * H)
    assert near.any()
    assert norm[near] == pytest.approx(np.sqrt(0.5), abs=10 * H**2)


def test_front_hessian_is_rank_one(front, profile):
    t = front.grid.coordinates() @ DIRECTION + front.metadata["offset"]
    expected = profile.second_derivative(t)
    H2 = hessian(front)
    mask = analysis_mask(front)
    outer = np.outer(DIRECTION, DIRECTION)
    for i in range(2):
        for j in range(2):
            assert np.max(np.abs(H2[i, j] - expected * outer[i, j])[mask]) < 10 * H**2


def test_qsq_vanishes_on_the_front(front):
    qsq = compute_Qsq(front).values
    band = analysis_mask(front, (-0.9, 0.9))
    assert np.max(np.abs(qsq[band])) <= 1e-4
    assert np.min(qsq[analysis_mask(front)]) >= -10 * H**2


def test_qsq_of_the_radial_quadratic(square):
    u = field_of(square, lambda x: 0.5 * np.sum(x * x, axis=-1))
    qsq = compute_Qsq(u).values
    assert qsq[square.nearest_index((1.0, 0.0))] == pytest.approx(1.0, abs=1e-9)
    # |grad u| vanishes at the origin
    assert qsq[square.nearest_index((0.0, 0.0))] == 0.0


def test_P_identity_holds_on_the_front(front, pot):
    stats = check_P_identity(front, pot, (-0.9, 0.9), tolerance=1e-2)
    assert stats.passed
    assert stats.count > 0


def test_P_identity_flags_a_non_solution(square, pot):
    wavy = field_of(
        square, lambda x: 0.8 * np.sin(2.0 * x[..., 0]) * np.cos(1.5 * x[..., 1])
    )
    stats = check_P_identity(wavy, pot, (-0.9, 0.9), tolerance=1e-2)
    assert not stats.passed
    assert stats.max > 0.1


def test_P_identity_empty_band(front, pot):
    with pytest.raises(EmptyRegionError):
        check_P_identity(front, pot, (0.95, 0.99))


def test_P_identity_converges(profile, pot):
    residuals = []
    spacings = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
    for h in spacings:
        u = planar_solution(profile, DIRECTION, -0.68, Grid.cube(2, 0.0, 1.0, h))
        residuals.append(check_P_identity(u, pot, (-0.9, 0.9)).max)
    slope = np.polyfit(np.log(spacings), np.log(residuals), 1)[0]
    assert slope >= 1.0


def test_harnack_ratio(square, profile):
    linear = field_of(square, lambda x: 0.1 * x[..., 0] + 0.05 * x[..., 1])
    ball = Ball((0.0, 0.0), 1.0)
    assert harnack_ratio(linear, ball, (-0.5, 0.5)) == pytest.approx(1.0)

    u = planar_solution(profile, [1.0, 0.0], 0.0, square)
    ratio = harnack_ratio(u, ball, (-0.5, 0.5))
    # the window is |t| <= atanh(0.5) sqrt(2)
    # where g' runs from 0.75 / sqrt 2 to 1 / sqrt 2
    assert ratio >= 1.0
    assert ratio == pytest.approx(1.0 / 0.75, rel=0.05)


def test_oscillation(profile):
    grid = Grid.cube(2, -4.0, 4.0, 1.0 / 16.0)
    constant = field_of(grid, lambda x: np.full(x.shape[:-1], 0.2))
    ball = Ball((0.0, 0.0), 3.0)
    assert oscillation(constant, ball) == 0.0
    u = planar_solution(profile, [1.0, 0.0], 0.0, grid)
    osc = oscillation(u, ball)
    assert osc >= 0.25
    assert osc == pytest.approx(2.0 * np.tanh(3.0 / np.sqrt(2.0)), abs=1e-6)


def test_interior_gradient_estimate(square, profile, pot):
    u = planar_solution(profile, [1.0, 0.0], 0.0, square)
    estimate = interior_gradient_estimate_check(u, pot, (0.0, 0.0), 1.0)
    assert estimate.passed
    assert estimate.margin > 0.0

    harmonic = polynomial_potential([0.0, 0.0, 0.0])
    linear = field_of(square, lambda x: x[..., 0])
    assert interior_gradient_estimate_check(linear, harmonic, (0.0, 0.0), 0.5).passed


def test_interior_gradient_estimate_outside(square, pot, profile):
    u = planar_solution(profile, [1.0, 0.0], 0.0, square)
    with pytest.raises(GridError):
        interior_gradient_estimate_check(u, pot, (1.9, 0.0), 0.5)

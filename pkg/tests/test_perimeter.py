import numpy as np
import pytest
from conftest import H

from phasewiz.errors import (
    DomainError,
    MissingLevelSetError,
    RadiusGuardError,
    UndefinedDensityError,
)
from phasewiz.helpers.competitors import (
    bump_competitor,
    generate_competitors,
    identity_competitor,
)
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.helpers.perimeter import (
    RadiusGuard,
    check_condition_325,
    check_integrand_conditions,
    d0_and_radius_guard,
    minimality_gap,
    weighted_perimeter,
)
from phasewiz.helpers.transform import transform
from phasewiz.models.density import (
    DensityWeight,
    build_weight,
    exp_theta_weight,
    grad_w_weight,
    power_alpha_weight,
    unit_weight,
)
from phasewiz.models.diffeomorphism import build_gaussian, build_power
from phasewiz.models.field import Ball, Grid, ScalarField
from phasewiz.models.profile import planar_solution


@pytest.fixture(scope="module")
def tanh_table():
    return build_power(1.0)


@pytest.fixture(scope="module")
def w_front(front, tanh_table):
    return transform(front, tanh_table)


@pytest.fixture(scope="module")
def E(w_front):
    return extract_level_set(w_front)


@pytest.fixture(scope="module")
def wide_front(profile):
    grid = Grid.cube(2, -3.0, 3.0, 1.0 / 16.0)
    return planar_solution(profile, [1.0, 0.0], 0.0, grid)


def test_unit_weight_across_a_diameter():
    grid = Grid.cube(2, -2.0, 2.0, 1.0 / 32.0)
    x = grid.coordinates()
    line = extract_level_set(ScalarField(grid, x @ np.array([0.6, 0.8]), "line"))
    value = weighted_perimeter(line, unit_weight(grid), Ball((0.0, 0.0), 1.0))
    assert value == pytest.approx(2.0, abs=5.0 / 32.0)


def test_unit_weight_outside_the_set(E, grid):
    assert weighted_perimeter(E, unit_weight(grid), Ball((0.05, 0.95), 0.02)) == 0.0


def test_field_weights_on_the_zero_level(front, w_front, E, ball, grid):
    length = weighted_perimeter(E, unit_weight(grid), ball)
    # w = t / sqrt 2 and |grad u| = 1 / sqrt 2 on the front
    for weight in (grad_w_weight(w_front), exp_theta_weight(front, 0.5)):
        value = weighted_perimeter(E, weight, ball)
        assert value == pytest.approx(np.sqrt(0.5) * length, rel=1e-3)


def test_perimeter_scales_with_the_density(front, E, ball):
    weight = power_alpha_weight(front, 2.0)
    value = weighted_perimeter(E, weight, ball)
    assert weighted_perimeter(E, weight.rescaled(2.5), ball) == pytest.approx(
        2.5 * value, rel=1e-12
    )


def test_undefined_density_names_the_facet(E, grid, ball):
    weight = DensityWeight("power_alpha", grid, np.full(grid.shape, np.nan))
    with pytest.raises(UndefinedDensityError, match="facet"):
        weighted_perimeter(E, weight, ball)


def test_power_alpha_is_undefined_at_the_wells(grid):
    u = ScalarField(grid, np.ones(grid.shape), "well")
    weight = power_alpha_weight(u, 2.0)
    assert np.all(np.isnan(weight.values))


def test_build_weight_dispatch(front, w_front):
    assert build_weight("unit", front).kind == "unit"
    assert build_weight("grad_w", front, w=w_front).is_local
    assert not build_weight("power_alpha", front, alpha=2.0).is_local
    with pytest.raises(DomainError):
        build_weight("exp_theta", front)
    with pytest.raises(DomainError):
        build_weight("area", front)


def test_integrand_conditions_of_the_area(grid):
    mask = grid.interior_mask()
    report, weight = check_integrand_conditions(unit_weight(grid), mask)
    assert report.passed
    assert report.homogeneity_error <= 1e-12
    assert report.mu0 == 1.0
    assert report.rescale_factor == 1.0
    assert report.convex
    assert report.lambda_estimate == 0.0
    assert weight.rescale == 1.0


def test_integrand_conditions_rescale_grad_w(front, w_front):
    band = front.band_mask((-0.4, 0.4)) & front.grid.interior_mask()
    report, weight = check_integrand_conditions(
        grad_w_weight(w_front), band, apply_rescale=True
    )
    assert report.mu0 == pytest.approx(np.sqrt(0.5), abs=1e-3)
    assert report.rescale_factor == pytest.approx(np.sqrt(2.0), abs=1e-2)
    assert not report.convex
    assert report.post_rescale_min == pytest.approx(1.0)
    assert report.convexity_error <= 1e-3
    assert np.min(weight.values[band]) >= 1.0 - 1e-12


class SquaredWeight(DensityWeight):
    """g |p|^2: a positive density, but not one-homogeneous in p."""

    def G(self, points, p):
        return self.at(points) * np.sum(np.atleast_2d(p) ** 2, axis=-1)


def test_integrand_conditions_evaluate_the_integrand(grid):
    mask = grid.interior_mask()
    report, _ = check_integrand_conditions(
        SquaredWeight("unit", grid, np.ones(grid.shape)), mask
    )
    assert report.homogeneity_error > 1e-2
    assert report.convexity_error > 1e-2
    assert not report.passed
    # the density alone still looks like the area
    assert report.mu0 == 1.0


def test_integrand_conditions_skip_nodes_without_a_value(grid):
    values = np.ones(grid.shape)
    values[grid.nearest_index((0.5, 0.5))] = np.nan
    report, _ = check_integrand_conditions(
        DensityWeight("unit", grid, values), grid.interior_mask()
    )
    assert report.passed


def test_integrand_conditions_reject_non_positive_densities(grid):
    weight = DensityWeight("unit", grid, -np.ones(grid.shape))
    with pytest.raises(DomainError):
        check_integrand_conditions(weight, grid.interior_mask())


def test_condition_on_the_wells(front, wide_front):
    assert not check_condition_325(front, 0.1).reached
    assert check_condition_325(front, 0.6).reached
    assert check_condition_325(wide_front, 0.1).reached
    with pytest.raises(DomainError):
        check_condition_325(front, 0.0)


def test_d0_for_linear_w(wide_front, tanh_table):
    w = transform(wide_front, tanh_table)
    guard = d0_and_radius_guard(w, tanh_table, 0.1)
    # w = t / sqrt 2, so the levels +-atanh(0.9) sit sqrt(2) atanh(0.9) away
    expected = np.sqrt(2.0) * np.arctanh(0.9)
    assert guard.d0 == pytest.approx(expected, abs=1.0 / 16.0)
    assert guard.r_max == pytest.approx(0.5 * guard.d0)
    assert guard.d0 > 0.0

    with pytest.raises(RadiusGuardError):
        guard.check(Ball((0.0, 0.0), guard.d0), "grad_w")
    guard.check(Ball((0.0, 0.0), guard.d0), "power_alpha")
    assert guard.allows(0.9 * guard.r_max, "exp_theta")


def test_d0_needs_the_levels(wide_front, front, tanh_table):
    short = build_gaussian(0.3, t_max=0.5, step=1e-3)
    with pytest.raises(MissingLevelSetError):
        d0_and_radius_guard(transform(wide_front, short), short, 0.1)
    # the unit-square front never reaches |u| = 0.9
    with pytest.raises(MissingLevelSetError):
        d0_and_radius_guard(transform(front, tanh_table), tanh_table, 0.1)


def test_identity_gap_is_zero(E, grid, ball):
    gap = minimality_gap(E, identity_competitor(E, ball), unit_weight(grid), ball)
    assert gap.gap == 0.0
    assert gap.passed


def test_bump_gap_is_the_arc_excess(E, w_front, grid, ball):
    centre = np.asarray(ball.center)
    F = bump_competitor(E, ball, centre, 0.2, 0.2 * ball.radius, E.normals[0], "bump")
    unit = minimality_gap(E, F, unit_weight(grid), ball)
    assert unit.gap > 0.0
    assert unit.gap == pytest.approx(unit.arc_excess, rel=1e-12)

    guard = RadiusGuard(np.inf, np.inf)
    local = minimality_gap(E, F, grad_w_weight(w_front), ball, guard)
    assert local.gap > 0.0
    with pytest.raises(RadiusGuardError):
        minimality_gap(E, F, grad_w_weight(w_front), ball)


def test_seeded_family_for_the_global_weight(front, E, ball):
    weight = power_alpha_weight(front, 2.0)
    competitors = generate_competitors(E, ball, 100, seed=0)
    gaps = [minimality_gap(E, F, weight, ball) for F in competitors]
    assert all(gap.passed for gap in gaps)
    assert min(gap.gap for gap in gaps) >= -10 * H * gaps[0].perimeter_E


def test_large_bumps_have_strictly_positive_gaps(front, E, grid, ball):
    competitors = generate_competitors(E, ball, 40, seed=0, amplitude=(0.05, 0.8))
    for weight in (unit_weight(grid), power_alpha_weight(front, 2.0)):
        gaps = [minimality_gap(E, F, weight, ball) for F in competitors]
        large = [gap for gap in gaps if gap.arc_excess > 20.0 * H]
        assert large, weight.kind
        assert all(gap.gap > 0.0 for gap in large), weight.kind

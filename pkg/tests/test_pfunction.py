import numpy as np
import pytest
from conftest import DIRECTION, H

from phasewiz.errors import AdmissibilityError, DomainError, EmptyRegionError
from phasewiz.helpers.calculus import analysis_mask
from phasewiz.helpers.pfunction import (
    PFunctionParams,
    alpha_exponent,
    c0_from_C1,
    c3_from_C2,
    check_hessian_bound,
    check_Q_bound,
    check_subharmonic,
    elliptic_operator_L,
    general_Q_bound,
    gradient_floor,
    gradient_norm_identities,
    modica_deficit,
    p_function,
    stability_form,
    subharmonic_lower_bound,
)
from phasewiz.models.field import Grid, ScalarField
from phasewiz.models.potential import polynomial_potential
from phasewiz.models.profile import planar_solution


def constant_field(grid, value):
    return ScalarField(grid, np.full(grid.shape, value), "const")


@pytest.mark.parametrize("C1, c0", [(0.5, 0.5), (0.2, 0.55), (0.9, 0.1)])
def test_c0(C1, c0):
    assert c0_from_C1(C1) == pytest.approx(c0)


@pytest.mark.parametrize("value", [0.0, 1.0, -0.3, 1.5])
def test_constants_need_the_unit_interval(value):
    with pytest.raises(DomainError):
        c0_from_C1(value)
    with pytest.raises(DomainError):
        c3_from_C2(value)
    with pytest.raises(DomainError):
        PFunctionParams(delta=value)


def test_alpha_exponent():
    alpha = alpha_exponent(PFunctionParams(C1=0.5), "hessian")
    assert alpha.value == pytest.approx(2.0)
    assert not alpha.discrepancy

    alpha = alpha_exponent(PFunctionParams(C1=0.2), "hessian")
    assert alpha.value == pytest.approx(1.0 / 0.55)
    assert alpha.statement_value == pytest.approx(5.0)
    assert alpha.discrepancy

    assert alpha_exponent(PFunctionParams(C2=0.5), "q").value == pytest.approx(2.0)
    with pytest.raises(DomainError):
        alpha_exponent(PFunctionParams(C1=0.5), "both")


def test_modica_deficit(front, pot, grid):
    deficit = modica_deficit(front, pot).values
    assert np.max(np.abs(deficit[analysis_mask(front)])) <= 10 * H**2
    zero = modica_deficit(constant_field(grid, 0.0), pot).values
    assert zero == pytest.approx(-0.5)


def test_gradient_floor(front):
    theta0 = gradient_floor(front, 0.1)
    assert theta0 == pytest.approx(0.19 / np.sqrt(2.0), abs=2e-3)
    wide = gradient_floor(front, 0.99)
    assert wide == pytest.approx(np.sqrt(0.5) * (1 - 1e-4), abs=2e-3)
    assert wide >= theta0
    with pytest.raises(EmptyRegionError):
        gradient_floor(constant_field(front.grid, 1.0), 0.1)


def test_hessian_bound_on_the_front(front):
    check = check_hessian_bound(front, 0.9, (-0.6, 0.6))
    assert check.passed
    assert check.empirical_constant == pytest.approx(0.6 * np.sqrt(2.0), rel=2e-2)

    wide = check_hessian_bound(front, 0.9, (-0.9, 0.9))
    assert not wide.passed
    assert wide.empirical_constant == pytest.approx(0.9 * np.sqrt(2.0), rel=2e-2)
    lo, hi = wide.failing_band
    assert lo < -0.6 and hi > 0.6


def test_hessian_bound_of_a_linear_field(grid):
    x = grid.coordinates()
    linear = ScalarField(grid, 0.2 * x[..., 0] - 0.1, "linear")
    check = check_hessian_bound(linear, 0.1, (-1.0, 1.0))
    assert check.passed
    assert check.empirical_constant < 1e-8


@pytest.mark.parametrize("interpretation", ["Qsq", "Q"])
def test_Q_bound_on_the_front(front, interpretation):
    check = check_Q_bound(front, 0.5, (-0.9, 0.9), interpretation)
    assert check.passed


def test_Q_bound_of_the_radial_quadratic():
    grid = Grid.cube(2, -1.5, 1.5, 1.0 / 32.0)
    x = grid.coordinates()
    u = ScalarField(grid, 0.5 * np.sum(x * x, axis=-1), "radial")
    # Qsq = 1 everywhere but the origin while 1 - u^2 = 3/4 at |x| = 1
    check = check_Q_bound(u, 0.9, (0.49, 0.51))
    assert not check.passed
    assert check.empirical_constant == pytest.approx(4.0 / 3.0, rel=2e-2)
    with pytest.raises(DomainError):
        check_Q_bound(u, 0.9, (0.49, 0.51), "Q2")


def test_general_Q_bound_reduces_for_the_canonical_well(front, pot):
    general = general_Q_bound(front, pot, 0.5, (-0.9, 0.9))
    plain = check_Q_bound(front, 0.5, (-0.9, 0.9))
    assert general.passed
    assert general.empirical_constant == pytest.approx(
        plain.empirical_constant, rel=1e-6, abs=1e-12
    )


def test_general_Q_bound_reports_the_broken_band(front):
    # W = u^2 (1 - u^2)^2 / 4 puts an extra zero at the origin
    pot = polynomial_potential([0.0, 0.0, 0.25, 0.0, -0.5, 0.0, 0.25])
    with pytest.raises(AdmissibilityError):
        general_Q_bound(front, pot, 0.5, (-0.9, 0.9))


def test_p_function(front, pot, grid):
    params = PFunctionParams(C1=0.5)
    P = p_function(front, pot, params, "hessian")
    assert P.metadata["c"] == pytest.approx(0.5)
    mask = analysis_mask(front)
    assert np.max(P.values[mask]) <= 10 * H**2
    near = mask & (np.abs(front.values) < 0.5 * H)
    assert P.values[near] == pytest.approx(-0.25, abs=1e-2)
    well = p_function(constant_field(grid, 1.0), pot, params, "hessian")
    assert np.all(well.values == 0.0)
    with pytest.raises(DomainError):
        p_function(front, pot, params, "q")


def test_subharmonic_where_the_hessian_bound_holds(front, pot):
    # on the front I = (2 - 5 C1)(1 - u^2)^3 / 4 when C1 < 2/5
    C1 = 0.38
    check = check_hessian_bound(front, C1, (-0.25, 0.25))
    assert check.passed
    lower = subharmonic_lower_bound(front, pot, C1)
    assert np.min(lower.values[check.ok_mask]) >= 0.0

    P = p_function(front, pot, PFunctionParams(C1=C1), "hessian")
    result = check_subharmonic(P, check.ok_mask & (lower.values >= 0.0))
    assert result.passed
    assert result.min_laplacian >= -10 * H
    assert check_subharmonic(P, check.ok_mask, lower=lower).passed


def test_lower_bound_chain_outside_the_subharmonic_band(front, pot):
    # C1 = 0.9 makes I = -2.5 u^2 (1 - u^2)^2 while Lap P - I stays positive
    check = check_hessian_bound(front, 0.9, (-0.4, 0.4))
    lower = subharmonic_lower_bound(front, pot, 0.9)
    assert np.max(lower.values[check.ok_mask]) <= 10 * H**2
    P = p_function(front, pot, PFunctionParams(C1=0.9), "hessian")
    assert check_subharmonic(P, check.ok_mask, lower=lower).passed


def test_subharmonic_of_a_constant(grid, pot):
    P = p_function(constant_field(grid, 1.0), pot, PFunctionParams(C1=0.5), "hessian")
    result = check_subharmonic(P, np.ones(grid.shape, dtype=bool))
    assert result.min_laplacian == 0.0
    assert result.passed
    with pytest.raises(EmptyRegionError):
        check_subharmonic(P, np.zeros(grid.shape, dtype=bool))


def test_operator_identity_converges(profile, pot):
    spacings = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
    residuals = []
    for h in spacings:
        u = planar_solution(profile, DIRECTION, -0.68, Grid.cube(2, 0.0, 1.0, h))
        result = elliptic_operator_L(u, pot, 0.5)
        assert np.all(result.C.values <= 0.0)
        assert np.min(result.J.values[result.mask]) >= -10 * h
        residuals.append(result.stats().max)
    assert residuals[-1] < residuals[0]
    slope = np.polyfit(np.log(spacings), np.log(residuals), 1)[0]
    assert slope >= 1.0


def test_gradient_norm_identities(front, pot, grid):
    split, expansion = gradient_norm_identities(front, pot, 0.5)
    assert split.max <= 1e-10
    assert expansion.max <= 1e-2

    x = grid.coordinates()
    wavy = ScalarField(
        grid, 0.8 * np.sin(2.0 * x[..., 0]) * np.cos(1.5 * x[..., 1]), "wavy"
    )
    split, _ = gradient_norm_identities(wavy, pot, 0.5)
    assert split.max <= 1e-8
    # L P~ = J needs the equation, unlike both gradient identities
    assert elliptic_operator_L(wavy, pot, 0.5).stats().max > 0.1


def test_stability_form(front):
    zero = stability_form(front, np.zeros(front.grid.shape))
    assert (zero.lhs, zero.rhs, zero.deficit) == (0.0, 0.0, 0.0)

    x = front.grid.coordinates()
    r_sq = np.sum((x - 0.5) ** 2, axis=-1)
    bump = np.where(r_sq < 0.09, (0.09 - r_sq) ** 2, 0.0)
    form = stability_form(front, bump)
    assert form.lhs > 0.0
    assert form.rhs == pytest.approx(0.0, abs=1e-6)
    assert form.deficit > 0.0

    with pytest.raises(DomainError):
        stability_form(front, np.ones(front.grid.shape))

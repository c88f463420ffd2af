import numpy as np
import pytest

from phasewiz.errors import AdmissibilityError, DomainError, StepSizeError
from phasewiz.models.diffeomorphism import (
    build_corridor,
    build_gaussian,
    build_hadamard,
    build_power,
    inverse_h_from_spec,
)


@pytest.fixture(scope="module")
def gaussian():
    return build_gaussian(0.5)


@pytest.fixture(scope="module")
def tanh_table():
    return build_power(1.0)


def test_gaussian_normalization(gaussian):
    assert float(gaussian(0.0)) == 0.0
    assert float(gaussian.derivative(0.0)) == pytest.approx(1.0, abs=1e-12)
    t = np.linspace(-4.0, 4.0, 161)
    assert gaussian(-t) == pytest.approx(-gaussian(t), abs=1e-10)


def test_gaussian_ode_between_nodes(gaussian):
    t = np.linspace(-4.0, 4.0, 1001) + 0.5 * gaussian.step
    phi = gaussian(t)
    residual = gaussian.derivative(t) - np.exp(-(phi**2) / (2 * 0.5**2))
    assert np.max(np.abs(residual)) <= 1e-8
    assert np.all(np.diff(gaussian.phi_values) > 0.0)


@pytest.mark.parametrize("theta0", [0.0, 1.0 / np.sqrt(2.0), 1.2])
def test_gaussian_theta0_range(theta0):
    with pytest.raises(DomainError):
        build_gaussian(theta0)


def test_power_with_c0_one_is_tanh(tanh_table):
    t = np.linspace(-5.0, 5.0, 2001)
    assert np.max(np.abs(tanh_table(t) - np.tanh(t))) <= 1e-8
    assert float(tanh_table(0.0)) == 0.0
    assert float(tanh_table.derivative(0.0)) == pytest.approx(1.0)
    lo, hi = tanh_table.phi_range
    assert -1.0 < lo and hi < 1.0


def test_power_slows_with_c0(tanh_table):
    assert float(build_power(0.5)(3.0)) < float(tanh_table(3.0))


def test_power_rejects(tanh_table):
    with pytest.raises(StepSizeError):
        build_power(1.0, step=2.5)
    with pytest.raises(DomainError):
        build_power(1.5)
    with pytest.raises(DomainError):
        build_power(1.0, t_max=1.0, step=2.0)


def test_power_is_fourth_order():
    errors = []
    for step in (0.1, 0.05):
        table = build_power(1.0, t_max=5.0, step=step)
        errors.append(np.max(np.abs(table.phi_values - np.tanh(table.t_grid))))
    assert 10.0 <= errors[0] / errors[1] <= 22.0


def test_round_trip(tanh_table, gaussian):
    for phi in (tanh_table, gaussian):
        y = np.linspace(-0.99, 0.99, 501)
        assert phi(phi.inverse(y)) == pytest.approx(y, abs=1e-8)
        assert np.all(np.diff(phi.inverse(y)) > 0.0)


def test_hadamard_with_unit_h_matches_gaussian(pot, gaussian):
    hadamard = build_hadamard(pot, 0.5, "unit")
    t = np.linspace(-3.0, 3.0, 601)
    assert float(hadamard(0.0)) == 0.0
    assert np.max(np.abs(hadamard(t) - gaussian(t))) <= 1e-6


def test_hadamard_admissibility(pot):
    minus_F = inverse_h_from_spec("hadamard", pot)
    u = np.array([-0.5, 0.0, 0.3])
    assert minus_F(u) == pytest.approx(1.0 - u**2)
    with pytest.raises(AdmissibilityError) as err:
        build_hadamard(pot, 0.5, "constant:0.5")
    assert np.min(np.abs(err.value.points)) < 1e-2
    with pytest.raises(DomainError):
        inverse_h_from_spec("cubic", pot)


def test_corridor_matches_power():
    corridor = build_corridor("scaled:0.5")
    power = build_power(0.5)
    t = np.linspace(-3.0, 3.0, 601)
    assert float(corridor(0.0)) == 0.0
    assert float(corridor.derivative(0.0)) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(corridor(t) - power(t))) <= 1e-6
    assert np.all(corridor.phi_prime_values > 0.0)


@pytest.mark.parametrize("A", ["constant:0.6", "scaled:1.5", "cubic:1"])
def test_corridor_rejects(A):
    with pytest.raises((AdmissibilityError, DomainError)):
        build_corridor(A)

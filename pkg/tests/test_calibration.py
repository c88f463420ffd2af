import numpy as np
import pytest
from conftest import CENTER, DIRECTION, front_offset

from phasewiz.errors import DomainError
from phasewiz.helpers.calibration import (
    CalibrationCertificate,
    divergence_certificate,
    swept_simplices,
)
from phasewiz.helpers.competitors import (
    bump_competitor,
    generate_competitors,
    identity_competitor,
)
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.helpers.transform import sign_consistency, transform
from phasewiz.models.diffeomorphism import build_power
from phasewiz.models.field import Ball, Grid, ScalarField


@pytest.fixture(scope="module")
def w(front):
    return transform(front, build_power(0.5))


@pytest.fixture(scope="module")
def E(w):
    return extract_level_set(w)


def bump_on(E, ball, amplitude=0.2):
    centre = np.asarray(ball.center)
    return bump_competitor(
        E, ball, centre, 0.2, amplitude * ball.radius, E.normals[0], "bump"
    )


def test_identity_is_trivially_calibrated(w, E, ball):
    certificate = divergence_certificate(w, E, identity_competitor(E, ball), ball)
    assert certificate.trivial
    assert certificate.passed
    assert certificate.relative_residual == 0.0


@pytest.mark.parametrize("amplitude", [0.2, -0.2])
def test_bump_is_calibrated(w, E, ball, amplitude):
    certificate = divergence_certificate(w, E, bump_on(E, ball, amplitude), ball)
    assert certificate.divergence_passed
    assert certificate.sign_passed
    assert certificate.boundary_passed
    assert certificate.sign_nodes > 0
    assert certificate.flux_scale > 0.0


def test_seeded_family_is_calibrated(w, E, ball):
    for F in generate_competitors(E, ball, 10, seed=5):
        assert divergence_certificate(w, E, F, ball).passed, F.descriptor


@pytest.mark.parametrize("amplitude, sign", [(0.2, 1.0), (-0.2, -1.0)])
def test_swept_region_orientation(E, ball, amplitude, sign):
    F = bump_on(E, ball, amplitude)
    _, signed = swept_simplices(E, F.surface, np.flatnonzero(F.modified))
    # positive where F sits on the side the normals of E point to
    assert sign * np.sum(signed) > 0.0


def test_sign_failures_agree_with_sign_consistency(grid, ball):
    # w = t - 2 t^3 has Lap w = -12 t, the opposite sign of w near {w = 0}
    t = grid.coordinates() @ DIRECTION + front_offset()
    w = ScalarField(grid, t - 2.0 * t**3, "cubic")
    E = extract_level_set(w)
    F = bump_on(E, ball)
    certificate = divergence_certificate(w, E, F, ball, sign_tolerance=1e-3)
    assert not certificate.sign_passed
    everywhere = np.ones(grid.shape, dtype=bool)
    reference = sign_consistency(w, w, everywhere, tolerance=1e-3)
    assert not (certificate.failing_mask & ~reference.failing_mask).any()


def test_dimension_mismatch(E, ball):
    grid = Grid.cube(3, 0.0, 1.0, 0.125)
    cube = ScalarField(grid, grid.coordinates()[..., 0] - 0.45, "x")
    with pytest.raises(DomainError):
        F = identity_competitor(E, ball)
        divergence_certificate(cube, E, F, Ball(CENTER, 0.25))


def test_divergence_needs_the_volume_integral(w, E, ball, monkeypatch):
    F = bump_on(E, ball)
    assert divergence_certificate(w, E, F, ball).divergence_passed
    monkeypatch.setattr(
        "phasewiz.helpers.calibration.laplacian",
        lambda u: u.derived(np.zeros(u.grid.shape), "zero"),
    )
    certificate = divergence_certificate(w, E, F, ball)
    assert certificate.volume_integral == 0.0
    assert certificate.relative_residual > 10.0 * certificate.tolerance
    assert not certificate.divergence_passed
    assert not certificate.passed


def test_chord_on_a_straight_front_has_a_small_residual(w, E, ball):
    F = generate_competitors(E, ball, 0, seed=0)[-1]
    assert F.descriptor == "chord"
    certificate = divergence_certificate(w, E, F, ball)
    assert certificate.relative_residual <= certificate.tolerance


def test_bound_excess_is_informational():
    certificate = CalibrationCertificate(
        "bump", boundary_max=0.0, boundary_tolerance=0.1, bound_excess=1.0
    )
    assert certificate.boundary_passed
    certificate.boundary_max = 0.2
    assert not certificate.boundary_passed

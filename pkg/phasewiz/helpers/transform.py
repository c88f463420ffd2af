"""The transformed field w = phi^-1(u) and the certificates built on it."""

from __future__ import annotations

from dataclasses import dataclass, field
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from scipy.ndimage import binary_dilation

from phasewiz.errors import DomainError, EmptyRegionError
from phasewiz.helpers.calculus import (
    RESIDUAL_MARGIN,
    ResidualStats,
    gradient_norm,
    laplacian,
)
from phasewiz.models.field import ScalarField

if TYPE_CHECKING:
    from typing import List, Optional, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.diffeomorphism import Diffeomorphism
    from phasewiz.models.potential import DoubleWellPotential

LOGGER = getLogger("phasewiz.diffeo")

ROUND_TRIP_TOL = 1e-8
# the quotient form divides by phi(w)
QUOTIENT_FLOOR = 1e-8
NEWTON_STEPS = 3


def transform(u: ScalarField, phi: Diffeomorphism, name: str = "w") -> ScalarField:
    """w = phi^-1(u) nodewise.

    Nodes whose value lies outside the range of phi are set to the nearest end
    of the t-range and flagged in ``metadata["flagged"]``; every later mask
    leaves them out.
    """
    values = u.values
    inside = phi.in_range(values)
    lo_t, hi_t = phi.t_range
    w = np.where(values > 0.0, hi_t, lo_t).astype(float)

    if inside.any():
        guess = np.clip(phi.inverse(values[inside]), lo_t, hi_t)
        # polish the spline inverse against the forward table
        for _ in range(NEWTON_STEPS):
            step = (phi(guess) - values[inside]) / phi.derivative(guess)
            guess = np.clip(guess - step, lo_t, hi_t)
        w[inside] = guess
    w[values == 0.0] = 0.0

    error = np.where(inside, np.abs(phi(w) - values), 0.0)
    drift = inside & (error > ROUND_TRIP_TOL)
    flagged = ~inside | drift
    if drift.any():
        LOGGER.warning(
            "%s nodes miss the round trip tolerance %s (worst %.3g) and are flagged",
            int(drift.sum()),
            ROUND_TRIP_TOL,
            float(error.max()),
        )
    if (~inside).any():
        LOGGER.warning(
            "%s nodes of %s lie outside the range %s of phi and are flagged",
            int((~inside).sum()),
            u.name,
            phi.phi_range,
        )
    return ScalarField(
        u.grid,
        w,
        name,
        "transformed",
        {
            "source": u.name,
            "kind": phi.kind,
            "params": dict(phi.params),
            "flagged": flagged,
            "round_trip": float(error[~flagged].max()) if (~flagged).any() else 0.0,
        },
    )


def flagged_nodes(w: ScalarField) -> NDArray:
    flagged = w.metadata.get("flagged")
    if flagged is None:
        return np.zeros(w.grid.shape, dtype=bool)
    return np.asarray(flagged, dtype=bool)


def usable_mask(w: ScalarField, margin: int = 1) -> NDArray:
    """Interior nodes whose Laplacian stencil touches no flagged node."""
    flagged = flagged_nodes(w)
    touched = binary_dilation(flagged, iterations=1) if flagged.any() else flagged
    return w.grid.interior_mask(margin) & ~touched


def certificate_band(
    w: ScalarField, phi: Diffeomorphism, delta: Optional[float] = None
) -> NDArray:
    """phi^-1(-1 + delta) < w < phi^-1(1 - delta), or every node when delta is None."""
    if delta is None:
        return np.ones(w.grid.shape, dtype=bool)
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    lo_phi, hi_phi = phi.phi_range
    lo = phi.t_range[0] if -1.0 + delta <= lo_phi else float(phi.inverse(-1.0 + delta))
    hi = phi.t_range[1] if 1.0 - delta >= hi_phi else float(phi.inverse(1.0 - delta))
    return (w.values > lo) & (w.values < hi)


@dataclass
class SignCertificate:
    """Where Lap w and w share a sign, up to a noise band."""

    fraction: float
    count: int
    tolerance: float
    failing: List[Tuple[float, ...]] = field(default_factory=list)
    excluded: int = 0
    sign_equivalent: bool = True
    failing_mask: Optional[NDArray] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return not self.failing and self.sign_equivalent


def sign_agreement(w: ScalarField, tolerance: float) -> NDArray:
    """Nodes where sign(Lap w) sign(w) >= 0, or either factor is within tolerance."""
    lap = laplacian(w).values
    return (
        (np.sign(lap) * np.sign(w.values) >= 0.0)
        | (np.abs(lap) <= tolerance)
        | (np.abs(w.values) <= tolerance)
    )


def sign_consistency(
    w: ScalarField,
    u: ScalarField,
    mask: NDArray,
    tolerance: Optional[float] = None,
) -> SignCertificate:
    """Fraction of usable mask nodes where Lap w and w agree in sign."""
    tolerance = 10.0 * w.h if tolerance is None else tolerance
    usable = usable_mask(w)
    region = mask & usable
    excluded = int((mask & w.grid.interior_mask() & ~usable).sum())
    if not region.any():
        raise EmptyRegionError("sign_consistency: the mask selects no usable nodes")
    bad = region & ~sign_agreement(w, tolerance)
    fraction = 1.0 - bad.sum() / region.sum()

    unflagged = ~flagged_nodes(w)
    equivalent = bool(
        np.array_equal(w.values[unflagged] < 0.0, u.values[unflagged] < 0.0)
    )
    if not equivalent:
        LOGGER.warning("{w < 0} and {u < 0} differ as node sets")
    points = [tuple(float(c) for c in p) for p in w.grid.coordinates()[bad]]
    if points:
        LOGGER.info(
            "sign consistency fails on %s of %s nodes (tolerance %.3g)",
            len(points),
            int(region.sum()),
            tolerance,
        )
    return SignCertificate(
        fraction=float(fraction),
        count=int(region.sum()),
        tolerance=tolerance,
        failing=points,
        excluded=excluded,
        sign_equivalent=equivalent,
        failing_mask=bad,
    )


def closed_form_laplacian_w(
    u: ScalarField, w: ScalarField, phi: Diffeomorphism, pot: DoubleWellPotential
) -> Tuple[NDArray, NDArray]:
    """Lap w from u and phi alone, and the nodes where the formula was evaluated.

    gaussian and power use their own brackets for the canonical potential,
    other kinds use u/phi'(w) [u^2 - 1 - phi''(w) |grad u|^2 / (phi(w) phi'(w)^2)]
    away from phi(w) = 0, and any other potential uses
    (W'(u) - phi''(w) |grad u|^2 / phi'(w)^2) / phi'(w).
    """
    values = u.values
    norm_sq = gradient_norm(u) ** 2
    t = w.values
    slope = phi.derivative(t)
    valid = np.ones(values.shape, dtype=bool)
    if pot.is_canonical and phi.kind == "gaussian":
        theta0 = phi.params["theta0"]
        lap = values / slope * (values**2 - 1.0 + norm_sq / theta0**2)
    elif pot.is_canonical and phi.kind == "power":
        c0 = phi.params["c0"]
        reach = np.abs(values) < 1.0
        safe = np.where(reach, 1.0 - values**2, 1.0)
        lap = values / slope * (values**2 - 1.0 + 2.0 * norm_sq / (c0 * safe))
        valid &= reach
    elif pot.is_canonical:
        at = phi(t)
        valid &= np.abs(at) >= QUOTIENT_FLOOR
        safe = np.where(valid, at, 1.0)
        ratio = phi.second_derivative(t) / (safe * slope**2)
        lap = values / slope * (values**2 - 1.0 - ratio * norm_sq)
    else:
        lap = (pot.Wp(values) - phi.second_derivative(t) * norm_sq / slope**2) / slope
    return np.where(valid, lap, 0.0), valid


def analytic_laplacian_w(
    u: ScalarField,
    phi: Diffeomorphism,
    pot: DoubleWellPotential,
    w: Optional[ScalarField] = None,
    mask: Optional[NDArray] = None,
    tolerance: Optional[float] = None,
) -> ResidualStats:
    """Max and mean of |Lap_h w - closed form| over the usable mask nodes."""
    w = transform(u, phi) if w is None else w
    closed, valid = closed_form_laplacian_w(u, w, phi, pot)
    region = usable_mask(w, RESIDUAL_MARGIN)
    if mask is not None:
        region &= mask
    skipped = int((region & ~valid).sum())
    if skipped:
        LOGGER.info("Lap w: %s nodes with phi(w) near 0 were skipped", skipped)
    region &= valid
    residual = laplacian(w).values - closed
    return ResidualStats.over(
        f"laplacian_w[{phi.kind}]", residual, region, tolerance, excluded=skipped
    )

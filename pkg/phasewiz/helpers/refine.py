"""Refinement studies: residuals per grid level and their log-log slopes."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from pandas import DataFrame

from phasewiz.errors import DomainError, LevelNotCrossedError
from phasewiz.helpers import calculus
from phasewiz.helpers.extraction import extract_level_set
from phasewiz.helpers.pfunction import elliptic_operator_L, modica_deficit
from phasewiz.helpers.solver import SolveConfig, boundary_from_spec, solve_dirichlet
from phasewiz.helpers.transform import analytic_laplacian_w, transform
from phasewiz.models.diffeomorphism import build_power
from phasewiz.models.potential import potential_from_spec
from phasewiz.models.profile import planar_solution, solve_profile

if TYPE_CHECKING:
    from typing import Dict, List, Sequence, Tuple

    from numpy.typing import NDArray

    from phasewiz.models.field import Grid, ScalarField
    from phasewiz.models.manifest import Manifest
    from phasewiz.models.potential import DoubleWellPotential
    from phasewiz.models.profile import HeteroclinicProfile

LOGGER = getLogger("phasewiz.harness")

# accepted (lower, upper) orders of convergence per residual check
SLOPE_WINDOWS: Dict[str, Tuple[float, float]] = {
    "laplacian": (1.7, 2.3),
    "modica_deficit": (1.7, 2.3),
    "extraction_length": (0.8, 2.2),
    "P_identity": (1.0, np.inf),
    "operator_identity": (1.0, np.inf),
    "laplacian_w": (1.0, np.inf),
}
SLOPE_COLUMNS = ("check", "levels", "slope", "lower", "upper", "passed")


def _segment_in_box(grid: Grid, point: NDArray, tangent: NDArray) -> float:
    """Length of the line point + s tangent inside the grid box."""
    lo, hi = -np.inf, np.inf
    for k, (a, b) in enumerate(grid.extents):
        if abs(tangent[k]) < 1e-15:
            if not a <= point[k] <= b:
                return 0.0
            continue
        s1, s2 = sorted(((a - point[k]) / tangent[k], (b - point[k]) / tangent[k]))
        lo, hi = max(lo, s1), min(hi, s2)
    return max(hi - lo, 0.0)


def _length_error(
    u: ScalarField, profile: HeteroclinicProfile, direction: NDArray, offset: float
) -> float:
    """|extracted length - exact length| for the level halfway to the largest |u|."""
    level = 0.5 * float(np.abs(u.values).max())
    surface = extract_level_set(u, level, "length_probe")
    # x . direction + offset = g^-1(level) on the exact level set
    distance = float(profile.inverse(level)) - offset
    tangent = np.array([-direction[1], direction[0]])
    exact = _segment_in_box(u.grid, distance * direction, tangent)
    return abs(surface.total_measure - exact)


def level_residuals(
    manifest: Manifest, pot: DoubleWellPotential, profile: HeteroclinicProfile
) -> Dict[str, float]:
    """The residual checks of one refinement level, keyed by check name."""
    grid = manifest.grid()
    if manifest.source == "planar":
        direction = manifest.unit_direction()
        u = planar_solution(profile, direction, manifest.offset, grid)
    elif manifest.source == "dirichlet":
        boundary = boundary_from_spec(manifest.boundary, grid, profile)
        cfg = SolveConfig(tolerance=float(manifest.tolerance("solver_tolerance")))
        u = solve_dirichlet(pot, grid, boundary, cfg).field
    else:
        raise DomainError("refinement studies need a planar or dirichlet field source")

    mask = calculus.analysis_mask(u)
    grad_floor = float(manifest.tolerance("grad_floor"))
    residuals: Dict[str, float] = {}
    residuals["laplacian"] = float(
        np.abs(calculus.laplacian(u).values - pot.Wp(u.values))[mask].max()
    )
    deficit = modica_deficit(u, pot).values
    residuals["modica_deficit"] = float(np.abs(deficit)[mask].max())
    residuals["P_identity"] = calculus.check_P_identity(
        u, pot, (-0.9, 0.9), grad_floor
    ).max
    if manifest.C2 is not None:
        residuals["operator_identity"] = (
            elliptic_operator_L(u, pot, manifest.C2, grad_floor).stats().max
        )
        phi = build_power(1.0 - manifest.C2)
        w = transform(u, phi)
        residuals["laplacian_w"] = analytic_laplacian_w(u, phi, pot, w=w).max
    if manifest.source == "planar" and grid.dim == 2:
        try:
            residuals["extraction_length"] = _length_error(
                u, profile, direction, manifest.offset
            )
        except LevelNotCrossedError as err:
            LOGGER.info(
                "Skipping the extraction length at h = %s: %s", grid.spacing, err
            )
    LOGGER.info("Level h = %s: %s", grid.spacing, residuals)
    return residuals


def convergence_slope(spacings: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(h)."""
    spacings = np.asarray(spacings, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    keep = residuals > 0.0
    if keep.sum() < 2:
        return float("nan")
    slope, _ = np.polyfit(np.log(spacings[keep]), np.log(residuals[keep]), 1)
    return float(slope)


def slope_in_window(check: str, slope: float) -> bool:
    """False for a NaN slope; any finite slope passes a check without a window."""
    if not np.isfinite(slope):
        return False
    lower, upper = SLOPE_WINDOWS.get(check, (-np.inf, np.inf))
    return lower <= slope <= upper


def refine_study(
    manifest: Manifest, levels: Sequence[float]
) -> Tuple[DataFrame, DataFrame]:
    """Reruns the residual checks at every spacing; returns (residuals, slopes).

    The residual table has one row per (check, h); the slope table one row per
    check with its fitted order.
    """
    levels = [float(h) for h in levels]
    if len(levels) < 3:
        raise DomainError(
            f"a refinement study needs at least 3 levels, got {len(levels)}"
        )
    if any(h <= 0.0 for h in levels):
        raise DomainError("refinement levels must be positive spacings")
    pot = potential_from_spec(manifest.potential)
    profile = solve_profile(
        pot,
        t_max=float(manifest.tolerance("profile_t_max")),
        step=float(manifest.tolerance("profile_step")),
    )

    def run_level(h: float) -> Dict[str, float]:
        return level_residuals(manifest.with_overrides(spacing=h), pot, profile)

    with ThreadPoolExecutor(max_workers=min(len(levels), 4)) as pool:
        # map keeps level order
        results: List[Dict[str, float]] = list(pool.map(run_level, levels))

    rows = []
    for h, residuals in zip(levels, results):
        for check, value in residuals.items():
            rows.append({"check": check, "h": h, "residual": value})
    table = DataFrame(rows, columns=["check", "h", "residual"])

    slopes = []
    for check, group in table.groupby("check", sort=False):
        slope = convergence_slope(group["h"], group["residual"])
        lower, upper = SLOPE_WINDOWS.get(check, (-np.inf, np.inf))
        passed = slope_in_window(check, slope)
        slopes.append(
            {
                "check": check,
                "levels": len(group),
                "slope": slope,
                "lower": lower,
                "upper": upper,
                "passed": passed,
            }
        )
        if passed:
            LOGGER.info("%s converges with order %.3g", check, slope)
        else:
            LOGGER.warning(
                "%s converges with order %.3g, outside [%s, %s]",
                check,
                slope,
                lower,
                upper,
            )
    return table, DataFrame(slopes, columns=list(SLOPE_COLUMNS))

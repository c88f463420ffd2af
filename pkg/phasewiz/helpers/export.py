"""Functions for exporting profiles, tables, level sets and check rows as CSV."""

from __future__ import annotations

from dataclasses import asdict
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
from pandas import DataFrame

if TYPE_CHECKING:
    from typing import Any, Dict, Iterable, List, Tuple, Union

    from phasewiz.helpers.calibration import CalibrationCertificate
    from phasewiz.helpers.perimeter import GapResult
    from phasewiz.models.diffeomorphism import Diffeomorphism
    from phasewiz.models.level_set import LevelSet
    from phasewiz.models.profile import HeteroclinicProfile

LOGGER = getLogger("phasewiz.harness")

FLOAT_FORMAT = "%.17g"
AXES = ("x", "y", "z")


def export_table(data: DataFrame, path: Union[str, Path]) -> Tuple[int, Path]:
    """Writes a DataFrame with 17 significant digits; returns (0, path) on success."""
    out = Path(path).resolve()
    out.parent.mkdir(parents=True, exist_ok=True)
    data.to_csv(out, index=False, float_format=FLOAT_FORMAT, encoding="utf-8")
    LOGGER.debug("Wrote %s rows to %s", len(data), out)
    if out.is_file():
        return 0, out
    else:
        return 1, out


def export_profile(
    profile: HeteroclinicProfile, path: Union[str, Path]
) -> Tuple[int, Path]:
    data = DataFrame(
        {"t": profile.t_grid, "g": profile.g_values, "g_prime": profile.gp_values}
    )
    return export_table(data, path)


def export_phi(phi: Diffeomorphism, path: Union[str, Path]) -> Tuple[int, Path]:
    data = DataFrame(
        {
            "t": phi.t_grid,
            "phi": phi.phi_values,
            "phi_prime": phi.phi_prime_values,
            "phi_second": phi.phi_second_values,
        }
    )
    return export_table(data, path)


def export_vertices(surface: LevelSet, path: Union[str, Path]) -> Tuple[int, Path]:
    data = DataFrame(surface.vertices, columns=list(AXES[: surface.dim]))
    data.insert(0, "vertex", np.arange(len(surface.vertices)))
    return export_table(data, path)


def export_facets(surface: LevelSet, path: Union[str, Path]) -> Tuple[int, Path]:
    """One row per facet: vertex indices, centroid, unit normal and measure."""
    axes = AXES[: surface.dim]
    columns: Dict[str, Any] = {"facet": np.arange(len(surface))}
    for k in range(surface.dim):
        columns[f"v{k}"] = surface.facets[:, k]
    for k, axis in enumerate(axes):
        columns[f"centroid_{axis}"] = surface.centroids[:, k]
    for k, axis in enumerate(axes):
        columns[f"normal_{axis}"] = surface.normals[:, k]
    columns["measure"] = surface.measures
    return export_table(DataFrame(columns), path)


def _points(points: Iterable[Tuple[float, ...]]) -> str:
    return ";".join(" ".join(f"{c:.17g}" for c in p) for p in points)


def gap_rows(gaps: List[GapResult], ball_radius: float) -> DataFrame:
    rows = []
    for gap in gaps:
        row = asdict(gap)
        row["ball_radius"] = ball_radius
        row["passed"] = gap.passed
        rows.append(row)
    return DataFrame(rows)


def export_gaps(
    gaps: List[GapResult], ball_radius: float, path: Union[str, Path]
) -> Tuple[int, Path]:
    return export_table(gap_rows(gaps, ball_radius), path)


def certificate_rows(certificates: List[CalibrationCertificate]) -> DataFrame:
    rows = []
    for cert in certificates:
        row = asdict(cert)
        row.pop("failing_mask")
        row["failing"] = _points(cert.failing)
        row["passed"] = cert.passed
        rows.append(row)
    return DataFrame(rows)


def export_certificates(
    certificates: List[CalibrationCertificate], path: Union[str, Path]
) -> Tuple[int, Path]:
    return export_table(certificate_rows(certificates), path)

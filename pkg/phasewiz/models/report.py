"""Report rows and the summary verdict of one verification run."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from importlib.metadata import PackageNotFoundError, version
from logging import getLogger
from typing import TYPE_CHECKING

import numpy as np
from pandas import DataFrame

from phasewiz.helpers.export import export_table

if TYPE_CHECKING:
    from pathlib import Path
    from typing import Any, Dict, List, Optional, Tuple, Union

    from phasewiz.helpers.calculus import ResidualStats

LOGGER = getLogger("phasewiz.harness")

COLUMNS = (
    "check",
    "field",
    "band",
    "constants",
    "h",
    "min",
    "max",
    "mean",
    "count",
    "tolerance",
    "passed",
    "informational",
    "note",
)


def package_version() -> str:
    try:
        return version("phasewiz")
    except PackageNotFoundError:
        return "unknown"


def _describe(values: Dict[str, Any]) -> str:
    parts = []
    for key, value in values.items():
        if isinstance(value, float):
            value = f"{value:.17g}"
        parts.append(f"{key}={value}")
    return ";".join(parts)


@dataclass
class CheckRow:
    """One check: what ran on which field, its residual and its verdict."""

    # pylint: disable=too-many-instance-attributes

    check: str
    field: str
    passed: bool
    band: str = ""
    constants: str = ""
    h: float = np.nan
    min: float = np.nan
    max: float = np.nan
    mean: float = np.nan
    count: int = 0
    tolerance: float = np.nan
    informational: bool = False
    note: str = ""

    @classmethod
    def from_stats(
        cls,
        stats: ResidualStats,
        field_name: str,
        h: float,
        band: Optional[Tuple[float, float]] = None,
        constants: Optional[Dict[str, Any]] = None,
        note: str = "",
    ) -> CheckRow:
        return cls(
            check=stats.name,
            field=field_name,
            passed=stats.passed,
            band="" if band is None else f"[{band[0]:.6g}, {band[1]:.6g}]",
            constants=_describe(constants or {}),
            h=h,
            max=stats.max,
            mean=stats.mean,
            count=stats.count,
            tolerance=np.nan if stats.tolerance is None else stats.tolerance,
            note=note or (f"excluded={stats.excluded}" if stats.excluded else ""),
        )

    @classmethod
    def info(
        cls,
        check: str,
        field_name: str,
        value: float,
        h: float,
        constants: Optional[Dict[str, Any]] = None,
        note: str = "",
    ) -> CheckRow:
        """A row that is reported but never changes the verdict."""
        return cls(
            check=check,
            field=field_name,
            passed=True,
            constants=_describe(constants or {}),
            h=h,
            max=value,
            informational=True,
            note=note,
        )


@dataclass
class Report:
    """All rows of a run plus the provenance needed to reproduce it."""

    name: str
    seed: int
    grid: str
    rows: List[CheckRow] = field(default_factory=list)
    version: str = field(default_factory=package_version)

    def add(self, row: CheckRow) -> CheckRow:
        self.rows.append(row)
        level = "PASS" if row.passed else "FAIL"
        if row.informational:
            level = "INFO"
        LOGGER.info("%s %s on %s: max %s", level, row.check, row.field, row.max)
        return row

    @property
    def failures(self) -> List[CheckRow]:
        return [row for row in self.rows if not row.informational and not row.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def summary(self) -> str:
        return "PASS" if self.passed else "FAIL"

    @property
    def provenance(self) -> Dict[str, Any]:
        return {"seed": self.seed, "grid": self.grid, "version": self.version}

    def to_frame(self) -> DataFrame:
        if not self.rows:
            return DataFrame(columns=list(COLUMNS))
        data = DataFrame([asdict(row) for row in self.rows])
        return data[list(COLUMNS)]

    def export(self, path: Union[str, Path]) -> Tuple[int, Path]:
        """Writes report.csv; the provenance goes into the log, not the table."""
        LOGGER.info(
            "Report %s: %s (%s rows, %s failing) %s",
            self.name,
            self.summary,
            len(self.rows),
            len(self.failures),
            self.provenance,
        )
        return export_table(self.to_frame(), path)

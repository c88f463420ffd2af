"""Compares a report against a stored baseline report."""

from __future__ import annotations

from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from phasewiz.errors import SchemaMismatchError
from phasewiz.models.report import COLUMNS

if TYPE_CHECKING:
    from typing import List, Union

LOGGER = getLogger("phasewiz.harness")

GROWTH_LIMIT = 2.0
KEYS = ["check", "field"]


@dataclass
class DriftReport:
    """One row per check present in either report, with its drift category.

    Categories: "ok", "expected" (growth on a coarser grid), "worse" (growth
    beyond the limit on the same or a finer grid), "flip" (verdict changed),
    "missing" and "new".
    """

    rows: pd.DataFrame

    def category(self, name: str) -> pd.DataFrame:
        return self.rows[self.rows["category"] == name]

    @property
    def flagged(self) -> pd.DataFrame:
        return self.rows[self.rows["category"] != "ok"]

    @property
    def hard_failure(self) -> bool:
        return bool((self.rows["category"].isin(["flip", "missing"])).any())

    @property
    def drift(self) -> bool:
        """True when anything other than expected growth was flagged."""
        return bool((~self.rows["category"].isin(["ok", "expected"])).any())


def _check_schema(data: pd.DataFrame, source: str) -> None:
    missing = [column for column in COLUMNS if column not in data.columns]
    extra = [column for column in data.columns if column not in COLUMNS]
    if missing or extra:
        raise SchemaMismatchError(
            f"{source} does not have the report columns: "
            f"missing {missing}, extra {extra}"
        )


def _category(row: pd.Series) -> str:
    if row["_merge"] == "left_only":
        return "new"
    if row["_merge"] == "right_only":
        return "missing"
    if bool(row["passed_current"]) != bool(row["passed_baseline"]):
        return "flip"
    if row["ratio"] > GROWTH_LIMIT:
        return "expected" if row["h_current"] > row["h_baseline"] else "worse"
    return "ok"


def compare_baseline(
    report: pd.DataFrame, baseline: Union[str, Path, pd.DataFrame]
) -> DriftReport:
    """Flags residual growth beyond 2x and verdict flips between two report tables."""
    if not isinstance(baseline, pd.DataFrame):
        path = Path(baseline)
        if not path.is_file():
            raise FileNotFoundError(f"Could not find a baseline report at {path}")
        baseline = pd.read_csv(path, keep_default_na=False, na_values=[""])
        source = str(path)
    else:
        source = "the baseline"
    _check_schema(report, "the report")
    _check_schema(baseline, source)

    columns = KEYS + ["h", "max", "passed"]
    merged = pd.merge(
        report[columns],
        baseline[columns],
        on=KEYS,
        how="outer",
        suffixes=("_current", "_baseline"),
        indicator=True,
    )
    current = merged["max_current"].astype(float).abs()
    previous = merged["max_baseline"].astype(float).abs()
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(
            previous > 0.0, current / previous, np.where(current > 0.0, np.inf, 1.0)
        )
    merged["ratio"] = np.where(current.isna() | previous.isna(), 1.0, ratio)
    merged["category"] = merged.apply(_category, axis=1)
    rows = merged.drop(columns="_merge")
    drift = DriftReport(rows)

    for _, row in drift.flagged.iterrows():
        LOGGER.warning(
            "%s on %s: %s (ratio %.3g)",
            row["check"],
            row["field"],
            row["category"],
            row["ratio"],
        )
    if not len(drift.flagged):
        LOGGER.info("No drift against %s", source)
    return drift


def drift_rows(drift: DriftReport) -> List[str]:
    return [
        f"{row['check']} [{row['field']}]: {row['category']}"
        for _, row in drift.flagged.iterrows()
    ]

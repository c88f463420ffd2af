"""The entry point for the program."""

from __future__ import annotations

import argparse
import logging
import sys
from logging import getLogger
from pathlib import Path
from typing import TYPE_CHECKING

import pandas as pd

import phasewiz
from phasewiz.errors import DomainError, PhaseWizError
from phasewiz.helpers.baseline import compare_baseline, drift_rows
from phasewiz.helpers.configuration import default
from phasewiz.helpers.export import export_table
from phasewiz.helpers.get_resource import get_resource
from phasewiz.helpers.refine import refine_study
from phasewiz.models.manifest import Manifest
from phasewiz.models.report import package_version
from phasewiz.models.run_handler import DATE_FORMAT, FORMAT, STAGES, RunHandler

if TYPE_CHECKING:
    from typing import List, Optional

LOGGER = getLogger("phasewiz.harness")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_LEVELS = (1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phasewiz",
        description="Numerical verification runs for Allen-Cahn P-functions, "
        "diffeomorphisms and weighted-perimeter minimality.",
    )
    parser.add_argument("--version", action="version", version=package_version())
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--manifest", help="a manifest file or the name of a bundled manifest"
    )
    common.add_argument("--out", type=Path, help="directory for run outputs")
    common.add_argument("--seed", type=int, help="overrides the manifest seed")
    common.add_argument("--h", type=float, help="overrides the grid spacing")
    common.add_argument("--quiet", action="store_true", help="only log warnings")

    commands = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        commands.add_parser(
            stage, parents=[common], help=f"run the pipeline through the {stage} stage"
        )
    refine = commands.add_parser(
        "refine", parents=[common], help="convergence orders across grid spacings"
    )
    refine.add_argument(
        "--levels",
        type=float,
        nargs="+",
        default=list(DEFAULT_LEVELS),
        help="grid spacings, at least three",
    )
    compare = commands.add_parser(
        "compare", parents=[common], help="compare a report against a baseline report"
    )
    compare.add_argument("--baseline", type=Path, required=True)
    compare.add_argument(
        "--report",
        type=Path,
        help="an existing report.csv; runs the manifest if omitted",
    )
    return parser


def resolve_manifest(value: Optional[str]) -> Path:
    """A manifest file, a bundled manifest name, or the most recent manifest."""
    if not value:
        value = phasewiz.CONFIG["recents"]["manifest"]
        if not value:
            raise DomainError("no --manifest given and no recent manifest to reuse")
        LOGGER.info("Reusing the most recent manifest %s", value)
    path = Path(value)
    if path.is_file():
        return path
    return get_resource(value)


def load_manifest(args: argparse.Namespace) -> Manifest:
    manifest = Manifest.load(resolve_manifest(args.manifest))
    return manifest.with_overrides(seed=args.seed, spacing=args.h).validate()


def run(args: argparse.Namespace) -> int:
    manifest = load_manifest(args)
    out = args.out or Path(default("output_dir"))

    if args.command == "refine":
        table, slopes = refine_study(manifest, args.levels)
        target = out.joinpath(manifest.name)
        export_table(table, target.joinpath("refine.csv"))
        export_table(slopes, target.joinpath("refine_slopes.csv"))
        for _, row in slopes.iterrows():
            verdict = "ok" if row["passed"] else "FAIL"
            print(
                f"{row['check']}: order {row['slope']:.3f} "
                f"over {row['levels']} levels, "
                f"window [{row['lower']}, {row['upper']}] {verdict}"
            )
        return EXIT_PASS if slopes["passed"].all() else EXIT_FAIL

    if args.command == "compare" and args.report is not None:
        frame = pd.read_csv(args.report, keep_default_na=False, na_values=[""])
    else:
        stage = "verify" if args.command == "compare" else args.command
        handler = RunHandler(manifest, out)
        report = handler.run(stage)
        print(f"{manifest.name}: {report.summary} ({handler.out_dir})")
        for row in report.failures:
            print(f"  FAIL {row.check} [{row.field}]: max {row.max:.6g}, {row.note}")
        if args.command != "compare":
            return EXIT_PASS if report.passed else EXIT_FAIL
        frame = report.to_frame()

    drift = compare_baseline(frame, args.baseline)
    for line in drift_rows(drift):
        print(line)
    print("drift" if drift.drift else "no drift")
    return EXIT_FAIL if drift.hard_failure or drift.drift else EXIT_PASS


def main(argv: Optional[List[str]] = None) -> int:
    """Parses the command line, runs it and returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return EXIT_USAGE if err.code else EXIT_PASS
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format=FORMAT,
        datefmt=DATE_FORMAT,
    )
    try:
        return run(args)
    except (DomainError, FileNotFoundError) as err:
        LOGGER.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except PhaseWizError as err:
        LOGGER.error("%s", err)
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from phasewiz.__main__ import main, resolve_manifest
from phasewiz.errors import DomainError, ManifestError, SchemaMismatchError
from phasewiz.helpers.baseline import compare_baseline, drift_rows
from phasewiz.helpers.get_resource import bundled_manifests, get_resource
from phasewiz.helpers.refine import (
    SLOPE_COLUMNS,
    SLOPE_WINDOWS,
    convergence_slope,
    refine_study,
    slope_in_window,
)
from phasewiz.models.manifest import Manifest
from phasewiz.models.report import COLUMNS, CheckRow, Report

LOCAL = "local_planar_2d"
COARSE = 1.0 / 32.0


@pytest.fixture(scope="module")
def local_text():
    return get_resource(LOCAL).read_text()


@pytest.fixture
def report():
    report = Report("demo", 0, "2D [0, 1]^2, h = 0.0078125")
    report.add(CheckRow("laplacian", "u", True, h=0.0078125, max=1e-6, tolerance=1e-4))
    report.add(CheckRow("sign_consistency", "w", True, h=0.0078125, max=0.0))
    report.add(CheckRow.info("d0", "w", np.inf, 0.0078125, note="wells not reached"))
    return report


def replace_line(text, old, new):
    assert old in text
    return text.replace(old, new)


# manifests -------------------------------------------------------------------------


@pytest.mark.parametrize("name", bundled_manifests())
def test_bundled_manifests_validate(name):
    manifest = Manifest.load(get_resource(name))
    assert manifest.name == name
    assert not manifest.issues()


def test_bundled_manifest_names():
    assert {"local_planar_2d", "global_planar_2d"} <= set(bundled_manifests())
    assert get_resource("local_planar_2d.toml") == get_resource("local_planar_2d")
    with pytest.raises(FileNotFoundError):
        get_resource("no_such_manifest")


def test_manifest_values(local_text):
    manifest = Manifest.from_toml(local_text)
    assert manifest.C1 == 0.9
    assert manifest.band == (-0.4, 0.4)
    assert manifest.center == (0.5, 0.5)
    assert manifest.competitor_count == 100
    assert manifest.unit_direction() == pytest.approx(
        [np.cos(np.deg2rad(30.0)), np.sin(np.deg2rad(30.0))]
    )


def test_delta_out_of_range(local_text):
    text = replace_line(local_text, "delta = 0.1", "delta = 0.0")
    with pytest.raises(ManifestError) as err:
        Manifest.from_toml(text)
    assert "parameters.delta must lie in (0, 1)" in err.value.issues


def test_missing_delta(local_text):
    text = replace_line(local_text, "delta = 0.1\n", "")
    with pytest.raises(ManifestError) as err:
        Manifest.from_toml(text)
    assert "parameters.delta is required" in err.value.issues


def test_unknown_keys_are_reported_together(local_text):
    text = replace_line(local_text, "dim = 2\n", "dim = 2\nbogus = 1\n")
    text += "\n[extras]\nfoo = 1\n"
    with pytest.raises(ManifestError) as err:
        Manifest.from_toml(text)
    assert "grid.bogus is not a known key" in err.value.issues
    assert "extras is not a known table or key" in err.value.issues


def test_name_is_required(local_text):
    text = replace_line(local_text, 'name = "local_planar_2d"\n', "")
    with pytest.raises(ManifestError) as err:
        Manifest.from_toml(text)
    assert "name is required" in err.value.issues


def test_two_field_sources(local_text):
    text = replace_line(
        local_text, 'source = "planar"', 'source = "planar"\nboundary = "constant:0"'
    )
    with pytest.raises(ManifestError) as err:
        Manifest.from_toml(text)
    assert any("exactly one field source" in issue for issue in err.value.issues)


def test_unparseable_manifest():
    with pytest.raises(ManifestError):
        Manifest.from_toml("name = ")


def test_missing_manifest_file(tmp_path):
    with pytest.raises(ManifestError):
        Manifest.load(tmp_path.joinpath("missing.toml"))


def test_overrides_and_tolerances(local_text):
    manifest = Manifest.from_toml(local_text)
    changed = manifest.with_overrides(seed=4, spacing=COARSE)
    assert (changed.seed, changed.spacing) == (4, COARSE)
    assert (manifest.seed, manifest.spacing) == (0, 1.0 / 128.0)
    assert changed.with_overrides() == changed
    # falls back to the [defaults] config table
    assert float(manifest.tolerance("gap_tolerance_factor")) == 10.0
    text = local_text + "\n[tolerances]\ngap_tolerance_factor = 20.0\n"
    assert Manifest.from_toml(text).tolerance("gap_tolerance_factor") == 20.0
    with pytest.raises(ManifestError):
        Manifest.from_toml(local_text + "\n[tolerances]\nbogus = 1.0\n")


def test_dump_and_load(local_text, tmp_path):
    manifest = Manifest.from_toml(local_text)
    path = manifest.dump(tmp_path.joinpath("copy.toml"))
    again = Manifest.load(path)
    assert again.source_path == path.resolve()
    for key in ("name", "seed", "spacing", "C1", "C2", "delta", "band", "weights"):
        assert getattr(again, key) == getattr(manifest, key), key


# reports ---------------------------------------------------------------------------


def test_report_verdict(report):
    assert report.passed
    assert report.summary == "PASS"
    report.add(CheckRow("minimality_gap", "unit", False, max=-0.3))
    assert report.summary == "FAIL"
    assert [row.check for row in report.failures] == ["minimality_gap"]


def test_informational_rows_never_fail(report):
    report.add(CheckRow("alpha_discrepancy", "power_alpha", False, informational=True))
    assert report.passed


def test_report_table(report, tmp_path):
    frame = report.to_frame()
    assert list(frame.columns) == list(COLUMNS)
    assert len(frame) == 3
    assert list(Report("empty", 0, "").to_frame().columns) == list(COLUMNS)

    code, path = report.export(tmp_path.joinpath("report.csv"))
    assert code == 0
    written = pd.read_csv(path)
    assert list(written.columns) == list(COLUMNS)
    assert written["check"].tolist() == ["laplacian", "sign_consistency", "d0"]


# baselines -------------------------------------------------------------------------


def test_identical_reports_have_no_drift(report):
    frame = report.to_frame()
    drift = compare_baseline(frame, frame.copy())
    assert not drift.drift
    assert not drift.hard_failure
    assert len(drift.flagged) == 0
    assert drift_rows(drift) == []


def test_growth_on_a_coarser_grid_is_expected(report):
    baseline = report.to_frame()
    current = baseline.copy()
    current.loc[0, ["h", "max"]] = [0.015625, 4e-6]
    drift = compare_baseline(current, baseline)
    assert drift.category("expected")["check"].tolist() == ["laplacian"]
    assert not drift.drift


def test_growth_on_the_same_grid_is_drift(report):
    baseline = report.to_frame()
    current = baseline.copy()
    current.loc[0, "max"] = 3e-6
    drift = compare_baseline(current, baseline)
    assert drift.category("worse")["check"].tolist() == ["laplacian"]
    assert drift.drift
    assert not drift.hard_failure
    assert drift_rows(drift) == ["laplacian [u]: worse"]


def test_verdict_flip_is_a_hard_failure(report):
    baseline = report.to_frame()
    current = baseline.copy()
    current.loc[1, "passed"] = False
    drift = compare_baseline(current, baseline)
    assert drift.category("flip")["check"].tolist() == ["sign_consistency"]
    assert drift.hard_failure


def test_missing_and_new_rows(report):
    baseline = report.to_frame()
    current = baseline.drop(index=1)
    current.loc[5] = current.loc[0]
    current.loc[5, "check"] = "P_identity"
    drift = compare_baseline(current, baseline)
    assert drift.category("missing")["check"].tolist() == ["sign_consistency"]
    assert drift.category("new")["check"].tolist() == ["P_identity"]
    assert drift.hard_failure


def test_baseline_from_a_file(report, tmp_path):
    _, path = report.export(tmp_path.joinpath("baseline.csv"))
    assert not compare_baseline(report.to_frame(), path).drift
    with pytest.raises(FileNotFoundError):
        compare_baseline(report.to_frame(), tmp_path.joinpath("nothing.csv"))


def test_schema_mismatch(report):
    frame = report.to_frame()
    with pytest.raises(SchemaMismatchError):
        compare_baseline(frame, frame.drop(columns="note"))
    with pytest.raises(SchemaMismatchError):
        compare_baseline(frame.assign(extra=1.0), frame)


# refinement ------------------------------------------------------------------------


def test_convergence_slope():
    spacings = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
    residuals = [3.0 * h**2 for h in spacings]
    assert convergence_slope(spacings, residuals) == pytest.approx(2.0)
    assert np.isnan(convergence_slope(spacings, [0.0, 0.0, 1e-3]))


def test_refinement_needs_three_levels(local_text):
    manifest = Manifest.from_toml(local_text)
    with pytest.raises(DomainError):
        refine_study(manifest, [COARSE, COARSE / 2.0])
    with pytest.raises(DomainError):
        refine_study(manifest, [COARSE, -COARSE, COARSE / 2.0])


def test_slope_windows():
    assert slope_in_window("laplacian", 2.0)
    assert not slope_in_window("laplacian", 1.5)
    assert not slope_in_window("laplacian", float("nan"))
    assert slope_in_window("P_identity", 3.0)
    assert not slope_in_window("extraction_length", 2.5)
    assert slope_in_window("not_windowed", 0.3)


def test_refinement_study(local_text):
    manifest = Manifest.from_toml(local_text)
    levels = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
    table, slopes = refine_study(manifest, levels)
    assert list(table.columns) == ["check", "h", "residual"]
    assert table[table["check"] == "laplacian"]["h"].tolist() == levels
    assert list(slopes.columns) == list(SLOPE_COLUMNS)
    slope = slopes.set_index("check")["slope"]
    assert set(slope.index) == set(SLOPE_WINDOWS)
    assert 1.7 <= slope["laplacian"] <= 2.3
    assert 1.7 <= slope["modica_deficit"] <= 2.3
    assert 0.8 <= slope["extraction_length"] <= 2.2
    for check in ("P_identity", "operator_identity", "laplacian_w"):
        assert slope[check] >= 1.0, check
    assert slopes["passed"].all()


# command line ----------------------------------------------------------------------


def test_version():
    assert main(["--version"]) == 0


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["unknown-stage"]) == 2
    bad = tmp_path.joinpath("bad.toml")
    bad.write_text('name = "bad"\n[parameters]\ndelta = 2.0\n')
    assert main(["verify", "--manifest", str(bad), "--out", str(tmp_path)]) == 2
    assert main(["verify", "--manifest", "no_such_manifest", "--quiet"]) == 2


def test_resolve_manifest(tmp_path):
    assert resolve_manifest(LOCAL) == get_resource(LOCAL)
    path = tmp_path.joinpath("mine.toml")
    path.write_text("")
    assert resolve_manifest(str(path)) == path


@pytest.mark.parametrize("name", bundled_manifests())
def test_bundled_manifests_pass(name, tmp_path):
    out = tmp_path.joinpath("runs")
    assert main(["verify", "--manifest", name, "--out", str(out), "--quiet"]) == 0
    run_dir = out.joinpath(name)
    report_csv = run_dir.joinpath("report.csv")
    frame = pd.read_csv(report_csv)
    assert list(frame.columns) == list(COLUMNS)
    assert "hypotheses_H" in frame["check"].tolist()
    assert frame[~frame["informational"]]["passed"].all()
    assert any(Path(run_dir, "logs").iterdir())

    # some competitors are long enough that their gaps must be strictly positive
    h = Manifest.load(get_resource(name)).spacing
    gaps = pd.read_csv(run_dir.joinpath("gaps.csv"))
    large = gaps[gaps["arc_excess"] > 20.0 * h]
    assert len(large) > 0
    assert (large["gap"] > 0.0).all()
    notes = frame[frame["check"].str.startswith("minimality_gap")]["note"]
    assert all(int(note.split("=")[1]) > 0 for note in notes)

    args = ["compare", "--manifest", name, "--quiet"]
    args += ["--baseline", str(report_csv), "--report", str(report_csv)]
    assert main(args) == 0


def test_spacing_override_is_recorded(tmp_path):
    out = tmp_path.joinpath("runs")
    args = ["verify", "--manifest", LOCAL, "--h", str(COARSE)]
    code = main(args + ["--out", str(out), "--quiet"])
    run_dir = out.joinpath(LOCAL)
    assert Manifest.load(run_dir.joinpath("manifest.toml")).spacing == COARSE
    frame = pd.read_csv(run_dir.joinpath("report.csv"))
    # the failing rows decide the exit code
    failing = frame[~frame["informational"] & ~frame["passed"]]
    assert code == (1 if len(failing) else 0)


def test_refine_exit_codes(tmp_path, monkeypatch):
    levels = ["--levels", "0.03125", "0.015625", "0.0078125"]
    args = ["refine", "--manifest", LOCAL, "--out", str(tmp_path), "--quiet"]
    assert main(args + levels) == 0
    assert tmp_path.joinpath(LOCAL, "refine_slopes.csv").is_file()

    def no_order(manifest, levels):
        nan = float("nan")
        row = ["laplacian", 3, nan, 1.7, 2.3, slope_in_window("laplacian", nan)]
        table = pd.DataFrame(columns=["check", "h", "residual"])
        return table, pd.DataFrame([row], columns=list(SLOPE_COLUMNS))

    monkeypatch.setattr("phasewiz.__main__.refine_study", no_order)
    assert main(args + levels) == 1

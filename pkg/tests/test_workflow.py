import json
import re
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from helper.cli_io import load_field_series, write_field_series
from helper.detrend import cyclic_spline_basis
from helper.field_core import regular_grid
from helper.report import fmt_number
from models.detrend import RegressionConfig
from models.field import FieldSeries
from workflow import main

SCHEMA = json.loads((Path(__file__).parents[1] / "schemas" / "report.schema.json").read_text())
NUMBER = re.compile(SCHEMA["$defs"]["number17"]["pattern"])


def _check_schema(report: dict) -> None:
    assert set(report) == set(SCHEMA["required"])
    assert report["command"] in SCHEMA["properties"]["command"]["enum"]
    row_keys = set(SCHEMA["properties"]["estimates"]["items"]["properties"])
    for row in report["estimates"]:
        assert set(row) <= row_keys
        assert NUMBER.match(row["prob"])
        for key in ("ci_lo", "ci_hi", "se", "raw"):
            assert row.get(key) is None or NUMBER.match(row[key])
    diag = SCHEMA["properties"]["diagnostics"]
    assert set(diag["required"]) <= set(report["diagnostics"]) <= set(diag["properties"])


def _check_csv_mirror(json_path: Path, report: dict) -> None:
    frame = pd.read_csv(json_path.with_suffix(".csv"), dtype=str, keep_default_na=False)
    assert list(frame.columns) == ["family", "label", "prob", "count", "ci_lo", "ci_hi", "se", "raw"]
    assert len(frame) == len(report["estimates"])
    for row, (_, line) in zip(report["estimates"], frame.iterrows()):
        for key in frame.columns:
            value = row.get(key)
            assert line[key] == ("" if value is None else str(value))


@pytest.fixture
def frechet_file(tmp_path, frechet_series):
    return write_field_series(frechet_series, tmp_path / "frechet.stxf")


def test_fmt_number():
    assert fmt_number(0.1) == "0.10000000000000001"
    assert fmt_number(0.5) == "0.5"
    assert fmt_number(None) is None
    assert float(fmt_number(1 / 3)) == 1 / 3


def test_analyze_end_to_end(tmp_path, frechet_file):
    report_path = tmp_path / "analysis.json"
    code = main([
        "analyze", "--input", str(frechet_file),
        "--risk", "mean", "--risk", "max",
        "--quantile-level", "0.9", "--lmax", "3", "--pattern-lengths", "2",
        "--stats", "area", "longitude",
        "--block-length", "200", "--replicates", "200", "--seed", "3",
        "--output", str(report_path),
    ])
    assert code == 0
    report = json.loads(report_path.read_text())
    _check_schema(report)
    _check_csv_mirror(report_path, report)

    families = {row["family"] for row in report["estimates"]}
    assert {"mean/cluster_size", "mean/pattern_l2", "max/cluster_size", "max/pattern_l2"} <= families
    sizes = [row for row in report["estimates"] if row["family"] == "mean/cluster_size"]
    assert [row["label"] for row in sizes] == ["1", "2", "3", ">=4"]
    assert sum(float(row["prob"]) for row in sizes) == pytest.approx(1.0, abs=1e-12)
    assert all(row["ci_lo"] is not None for row in sizes)
    assert float(sizes[0]["prob"]) > 0.8
    assert report["diagnostics"]["n_clusters"] > 0
    assert set(report["diagnostics"]["extra"]["thresholds"]) == {"mean", "max"}


def test_analyze_reproducible(tmp_path, frechet_file):
    args = ["analyze", "--input", str(frechet_file), "--lmax", "2", "--pattern-lengths", "2",
            "--block-length", "400", "--replicates", "150", "--seed", "9"]
    assert main(args + ["--output", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--output", str(tmp_path / "b.json")]) == 0
    a = json.loads((tmp_path / "a.json").read_text())
    b = json.loads((tmp_path / "b.json").read_text())
    assert a["estimates"] == b["estimates"]
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_analyze_without_bootstrap_uses_default_output(tmp_output, frechet_file):
    assert main(["analyze", "--input", str(frechet_file), "--no-bootstrap", "--pattern-lengths", "2"]) == 0
    report_path = tmp_output / "output" / "analyze_report.json"
    report = json.loads(report_path.read_text())
    assert all(row["ci_lo"] is None and row["ci_hi"] is None for row in report["estimates"])
    assert report["diagnostics"]["n_degenerate_replicates"] == 0
    _check_csv_mirror(report_path, report)


def test_analyze_config_file_and_flag_override(tmp_path, frechet_file):
    config = tmp_path / "analysis.json"
    config.write_text(json.dumps({
        "input_path": str(frechet_file),
        "lmax": 2,
        "pattern_lengths": [2],
        "run_bootstrap": False,
    }))
    out = tmp_path / "report.json"
    assert main(["analyze", "--config", str(config), "--lmax", "4", "--output", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["config"]["lmax"] == 4
    sizes = [row for row in report["estimates"] if row["family"] == "mean/cluster_size"]
    assert len(sizes) == 5


def test_threshold_above_maximum_exits_with_no_clusters(tmp_path, frechet_file):
    out = tmp_path / "report.json"
    code = main(["analyze", "--input", str(frechet_file), "--threshold", "1e12", "--no-bootstrap", "--output", str(out)])
    assert code == 3
    assert not out.exists()


def test_invalid_and_missing_inputs(tmp_path, frechet_file):
    assert main(["analyze", "--input", str(frechet_file), "--quantile-level", "1.5"]) == 2
    assert main(["analyze", "--input", str(frechet_file), "--pattern-lengths", "7"]) == 2
    assert main(["analyze", "--input", str(tmp_path / "absent.stxf")]) == 4
    assert main(["analyze", "--config", str(tmp_path / "absent.json")]) == 4


def test_short_series_for_bootstrap_is_invalid(tmp_path, frechet_file):
    out = tmp_path / "report.json"
    code = main(["analyze", "--input", str(frechet_file), "--block-length", "3000", "--output", str(out)])
    assert code == 2


def test_simulate_end_to_end(tmp_path):
    args = ["simulate", "--nx", "3", "--ny", "2", "--n-times", "40", "--truncation", "3", "--seed", "5"]
    assert main(args + ["--output", str(tmp_path / "a.stxf"), "--report", str(tmp_path / "a.json")]) == 0
    assert main(args + ["--output", str(tmp_path / "b.stxf"), "--report", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.stxf").read_bytes() == (tmp_path / "b.stxf").read_bytes()
    series = load_field_series(tmp_path / "a.stxf")
    assert series.values.shape == (40, 6)
    assert (series.values > 0).all()
    report = json.loads((tmp_path / "a.json").read_text())
    _check_schema(report)
    assert report["estimates"] == []
    extra = report["diagnostics"]["extra"]
    assert extra["seed"] == 5
    assert NUMBER.match(extra["extremal_coefficient_theoretical"])


def test_simulate_csv_output(tmp_path):
    out = tmp_path / "sim.csv"
    args = ["simulate", "--nx", "2", "--ny", "1", "--n-times", "10", "--format", "csv",
            "--output", str(out), "--report", str(tmp_path / "sim.json")]
    assert main(args) == 0
    assert load_field_series(out, fmt="csv").values.shape == (10, 2)


def test_detrend_end_to_end(tmp_path, rng, grid_2x2):
    config = RegressionConfig()
    t = np.arange(800, dtype=np.float64)
    seasonal = cyclic_spline_basis(config, t) @ rng.normal(size=12)
    values = 10.0 + 0.002 * t[:, None] + seasonal[:, None] + rng.normal(scale=0.5, size=(800, 4))
    raw = write_field_series(FieldSeries(grid=grid_2x2, values=values), tmp_path / "raw.csv", fmt="csv")

    out = tmp_path / "anomalies.stxf"
    coefficients = tmp_path / "coefficients.csv"
    code = main([
        "detrend", "--input", str(raw), "--format", "csv", "--radius", "0",
        "--output", str(out), "--coefficients", str(coefficients),
        "--report", str(tmp_path / "detrend.json"),
    ])
    assert code == 0
    anomalies = load_field_series(out)
    assert anomalies.values.shape == (800, 4)
    assert np.abs(anomalies.values.astype(np.float64).mean(axis=0)).max() < 1e-3
    frame = pd.read_csv(coefficients)
    assert frame.shape == (4, 15)
    np.testing.assert_allclose(frame["beta_1"], 0.002, atol=5e-4)
    report = json.loads((tmp_path / "detrend.json").read_text())
    _check_schema(report)
    assert report["config"]["regression"]["pooling_radius"] == 0.0


def test_oracle_end_to_end(tmp_path):
    out = tmp_path / "oracle.json"
    code = main([
        "oracle", "--nx", "2", "--ny", "2", "--lmax", "2", "--pattern-lengths", "2",
        "--stats", "area", "--draws", "10000", "--quadrature-points", "50", "--seed", "1",
        "--output", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    _check_schema(report)
    _check_csv_mirror(out, report)
    families = [row["family"] for row in report["estimates"]]
    assert families.count("mean/cluster_size") == 3
    assert families.count("mean/pattern_l2") == 3
    assert families.count("mean/area_l2") == 3
    for row in report["estimates"]:
        assert 0.0 <= float(row["prob"]) <= 1.0
        assert float(row["se"]) >= 0.0
        assert row["raw"] is not None
    assert report["diagnostics"]["extra"]["draws"] == 10000


def test_pattern_family_without_block_windows_keeps_point_estimate(tmp_path):
    # The only length-2 cluster straddles the block boundary at t = 100
    values = np.zeros((400, 1))
    values[[50, 150, 250, 350], 0] = 5.0
    values[99, 0], values[100, 0] = 5.0, 6.0
    data = write_field_series(FieldSeries(grid=regular_grid(1, 1), values=values), tmp_path / "spikes.stxf")
    out = tmp_path / "report.json"
    code = main([
        "analyze", "--input", str(data), "--threshold", "1.0", "--lmax", "3",
        "--pattern-lengths", "2", "--block-length", "100", "--replicates", "100",
        "--seed", "5", "--output", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    patterns = [row for row in report["estimates"] if row["family"] == "mean/pattern_l2"]
    assert [row["label"] for row in patterns] == ["(1,2)", "(2,1)", "ties"]
    assert float(patterns[0]["prob"]) == 1.0
    assert all(row["ci_lo"] is None and row["ci_hi"] is None for row in patterns)
    sizes = [row for row in report["estimates"] if row["family"] == "mean/cluster_size"]
    assert all(row["ci_lo"] is not None for row in sizes)
    assert report["diagnostics"]["extra"]["families_without_intervals"] == ["mean/pattern_l2"]


def test_oracle_risk_stat(tmp_path):
    out = tmp_path / "oracle.json"
    code = main([
        "oracle", "--nx", "2", "--ny", "2", "--lmax", "2", "--pattern-lengths", "2",
        "--stats", "risk", "--draws", "10000", "--quadrature-points", "50", "--seed", "1",
        "--output", str(out),
    ])
    assert code == 0
    report = json.loads(out.read_text())
    families = [row["family"] for row in report["estimates"]]
    assert families.count("mean/risk_l2") == 3


def test_nonpositive_threads_rejected(frechet_file):
    from config import settings

    before = settings.threads
    assert main(["analyze", "--input", str(frechet_file), "--no-bootstrap", "--threads", "0"]) == 2
    assert settings.threads == before

import datetime as dt
import json
import subprocess
import sys

import numpy as np
import pytest

from stormgen.bundle import ModelBundle
from stormgen.cli import run
from stormgen.store import read_scenarios


def write_csv(path, start, values):
    d0 = dt.date.fromisoformat(start)
    rows = ["date,precip_mm"] + [f"{d0 + dt.timedelta(days=i)},{v!r}" for i, v in enumerate(values)]
    path.write_text("\n".join(rows) + "\n")
    return path


def ten_year_record(extreme_januaries=(2002, 2005, 2009)):
    """Wet every day; January stays at or below 2 mm except one 100 mm day in the chosen years."""
    start = dt.date(2001, 1, 1)
    n = (dt.date(2011, 1, 1) - start).days
    rng = np.random.default_rng(0)
    values = np.round(rng.uniform(1.0, 5.0, n), 3)
    for i in range(n):
        day = start + dt.timedelta(days=i)
        if day.month == 1:
            values[i] = 100.0 if (day.year in extreme_januaries and day.day == 15) else min(values[i], 2.0)
    return "2001-01-01", values.tolist()


@pytest.fixture(scope="module")
def fitted_dir(tmp_path_factory, fixture_csv):
    out = tmp_path_factory.mktemp("fit")
    assert run(["fit", "--input", str(fixture_csv), "--out", str(out)]) == 0
    return out


def one_line_error(err: str, code_word: str):
    lines = err.strip().splitlines()
    assert len(lines) == 1 and lines[0].startswith("stormgen: error[")
    assert code_word in lines[0]


def test_fit_writes_valid_bundle(fitted_dir):
    bundle = ModelBundle.load(fitted_dir / "bundle.json")
    assert bundle.markov.transitions.shape == (12, 3, 3)
    assert np.all(np.abs(bundle.markov.transitions.sum(axis=2) - 1) <= 1e-12)
    assert bundle.markov.fitted.all()


def test_fit_is_byte_identical(fitted_dir, fixture_csv, tmp_path):
    assert run(["fit", "--input", str(fixture_csv), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bundle.json").read_bytes() == (fitted_dir / "bundle.json").read_bytes()


def test_fit_all_zero_warns(tmp_path, capsys):
    csv = write_csv(tmp_path / "zero.csv", "2001-01-01", [0.0] * 730)
    assert run(["fit", "--input", str(csv), "--out", str(tmp_path)]) == 0
    err = capsys.readouterr().err
    assert "degenerate extreme threshold" in err
    assert any("degenerate" in w for w in ModelBundle.load(tmp_path / "bundle.json").warnings)


def test_generate_half_split(fitted_dir, tmp_path):
    out = tmp_path / "gen"
    args = ["generate", "--bundle", str(fitted_dir / "bundle.json"), "--out", str(out), "--n", "200", "--p", "0.5",
            "--month", "1", "--seed", "42"]
    assert run(args) == 0
    stored = read_scenarios(out / "scenarios")
    assert stored.manifest["counts"]["extreme"] == 100 and stored.manifest["counts"]["non_extreme"] == 100
    flags = [any(s.states == 2) for s in stored.states()]
    assert sum(flags) == 100


def test_generate_from_empirical(tmp_path):
    start, values = ten_year_record()
    csv = write_csv(tmp_path / "rec.csv", start, values)
    assert run(["fit", "--input", str(csv), "--out", str(tmp_path)]) == 0
    assert ModelBundle.load(tmp_path / "bundle.json").empirical["1"].p == pytest.approx(0.3)
    args = ["generate", "--input", str(csv), "--out", str(tmp_path), "--n", "10", "--p", "from:empirical", "--month", "1"]
    assert run(args) == 0
    stored = read_scenarios(tmp_path / "scenarios")
    assert stored.manifest["ensemble"]["p_source"] == "from:empirical"
    assert stored.manifest["counts"]["extreme"] == 3


def test_generate_missing_bundle(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "bundle.json"
    assert run(["generate", "--bundle", str(missing), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    one_line_error(err, "io")
    assert str(missing) in err


def test_generate_infeasible_conditioning(tmp_path, capsys):
    # a record with no extreme day anywhere leaves nothing to condition on
    csv = write_csv(tmp_path / "zero.csv", "2001-01-01", [0.0] * 730)
    assert run(["fit", "--input", str(csv), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    code = run(["generate", "--out", str(tmp_path), "--n", "10", "--p", "0.5", "--month", "1"])
    assert code == 1
    one_line_error(capsys.readouterr().err, "weathergen")


def test_fingerprint_mismatch(fitted_dir, tmp_path, capsys):
    other = write_csv(tmp_path / "other.csv", "2001-01-01", [1.0] * 400)
    base = ["generate", "--bundle", str(fitted_dir / "bundle.json"), "--input", str(other), "--out", str(tmp_path),
            "--n", "4", "--p", "0.5"]
    assert run(base) == 1
    one_line_error(capsys.readouterr().err, "fingerprint")
    assert run(base + ["--force"]) == 0


def test_usage_errors(capsys):
    for argv in (["explode"], ["generate", "--seed", "-1"], ["generate", "--p", "often"], []):
        assert run(argv) == 2
        one_line_error(capsys.readouterr().err, "usage")


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"ensemble": {"n": 5, "colour": "red"}}))
    assert run(["fit", "--config", str(cfg)]) == 2
    one_line_error(capsys.readouterr().err, "config")
    cfg.write_text("{")
    assert run(["fit", "--config", str(cfg)]) == 2
    one_line_error(capsys.readouterr().err, "config")
    assert run(["generate", "--p", "1.5"]) == 2
    one_line_error(capsys.readouterr().err, "config")


def test_ingest_error_names_line(tmp_path, capsys):
    csv = tmp_path / "bad.csv"
    csv.write_text("date,precip_mm\n2001-01-01,1.0\n2001-01-03,2.0\n")
    assert run(["fit", "--input", str(csv), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    one_line_error(err, "ingest")
    assert "line 2" in err


def run_pipeline(root, fixture_csv, workers="1", extra=()):
    out = root / "out"
    steps = [
        ["fit", "--input", str(fixture_csv), "--out", str(out)],
        ["generate", "--input", str(fixture_csv), "--out", str(out), "--n", "40", "--p", "0.5", "--month", "1",
         "--seed", "7", "--workers", workers, "--calibration", "climatology", *extra],
        ["evaluate", "--input", str(fixture_csv), "--out", str(out), "--heldout", str(fixture_csv)],
        ["report", "--out", str(out)],
    ]
    for argv in steps:
        assert run(argv) == 0, argv
    return out


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_end_to_end_deterministic(tmp_path, fixture_csv, capsys):
    a = run_pipeline(tmp_path / "a", fixture_csv)
    b = run_pipeline(tmp_path / "b", fixture_csv, workers="3")
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta == tb
    assert {"bundle.json", "scenarios/manifest.json", "evaluation/qq.csv", "evaluation/spells.csv",
            "evaluation/metrics.json", "evaluation/report.txt"} <= set(ta)
    metrics = json.loads(ta["evaluation/metrics.json"])
    assert metrics["crps"]["status"] == "ok" and len(metrics["crps"]["periods"]) == 30
    assert metrics["brier"]["status"] == "ok"
    assert "CRPS (mean)" in capsys.readouterr().out


def test_report_rerun_identical(tmp_path, fixture_csv):
    out = run_pipeline(tmp_path, fixture_csv)
    first = (out / "evaluation" / "report.txt").read_bytes()
    assert run(["report", "--out", str(out)]) == 0
    assert (out / "evaluation" / "report.txt").read_bytes() == first


def test_evaluate_skips_without_heldout(tmp_path, fixture_csv):
    out = tmp_path / "out"
    assert run(["fit", "--input", str(fixture_csv), "--out", str(out)]) == 0
    assert run(["generate", "--out", str(out), "--n", "10", "--p", "0.5", "--format", "ndjson"]) == 0
    assert run(["evaluate", "--input", str(fixture_csv), "--out", str(out)]) == 0
    metrics = json.loads((out / "evaluation" / "metrics.json").read_text())
    assert metrics["crps"]["status"] == "skipped" and metrics["brier"]["status"] == "skipped"
    assert run(["report", "--out", str(out)]) == 0
    assert "skipped" in (out / "evaluation" / "report.txt").read_text()


def test_perfect_brier(tmp_path, fixture_csv):
    # every held-out January has an extreme day and the ensemble forecasts P = 1
    out = tmp_path / "out"
    assert run(["fit", "--input", str(fixture_csv), "--out", str(out)]) == 0
    assert run(["generate", "--out", str(out), "--n", "5", "--p", "1", "--month", "1"]) == 0
    held = write_csv(tmp_path / "held.csv", "2001-01-01", ([500.0] + [0.0] * 30) * 1 + [0.0] * 28)
    assert run(["evaluate", "--input", str(fixture_csv), "--out", str(out), "--heldout", str(held)]) == 0
    metrics = json.loads((out / "evaluation" / "metrics.json").read_text())
    assert metrics["brier"]["score"] == 0.0
    assert run(["report", "--out", str(out)]) == 0
    assert "Brier score        0 " in (out / "evaluation" / "report.txt").read_text()


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "stormgen.cli", "report", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert proc.stderr.startswith("stormgen: error[io]:") and proc.stdout == ""

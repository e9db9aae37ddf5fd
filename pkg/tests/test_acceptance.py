"""Acceptance criteria 1-8.

Each test records one ``criterion N: PASS|FAIL`` line (shown in the terminal
summary) before asserting. Tolerances are pinned in the constants below.
"""

import datetime as dt
import os
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import crps_by_integration, gev_inverse_cdf, gpd_inverse_cdf, quantile_type7
from stormgen.cli import run
from stormgen.extremes import define_extreme, empirical_extreme_probability, fit_gev_maxima, fit_gpd_excesses
from stormgen.fixtures import analytic_quantile
from stormgen.ingest import CsvOptions, read_daily_csv
from stormgen.means import MeanForecast
from stormgen.metrics import brier_score, crps_ensemble, ks_statistic
from stormgen.timeseries import DailySeries, OccurrenceState, StateSequence, classify
from stormgen.weathergen import (
    EnsembleSpec,
    MonthlyMarkovModel,
    TargetPeriod,
    calibrate,
    extreme_count,
    fit_intensity,
    fit_markov,
    run_ensemble,
    WeatherGenerator,
)
from stormgen.weathergen.markov import simulate_states, transition_counts

# criterion 1
SWEEP_P = [i / 10 for i in range(11)]
SWEEP_N = [1, 10, 100]
C1_SECONDS = 60.0
# criterion 2
BOSTON_THRESHOLD, BOSTON_TOL = 18.2, 0.1
FIXTURE_TOL = 1e-9
# criterion 3
MARKOV_DAYS = 100_000
MARKOV_TOL = 0.02
C3_SECONDS = 30.0
# criterion 4
EVT_SAMPLES = 100_000
SHAPE_TOL = 0.02
SCALE_REL_TOL = 0.02
# criterion 5
CRPS_TOL = 1e-6
BRIER_TOL = 1e-12
# criterion 6
QQ_LEVELS = [round(0.05 * i, 2) for i in range(1, 20)]
QQ_REL_TOL = 0.10
KS_MAX = 0.05
MIN_POOL = 10_000
C6_SECONDS = 120.0
# criterion 8
CALIBRATION_RATIO = 1.5
CALIBRATION_REL_TOL = 1e-9

JAN = TargetPeriod(month=1)


def extreme_scenarios(ss) -> int:
    """Count scenarios with an Extreme day by reclassifying their amounts."""
    return sum(bool(np.any(classify(s.series, ss.definition).states == OccurrenceState.EXTREME)) for s in ss.scenarios)


# -- 1 ------------------------------------------------------------------------


def test_criterion_1_conditioning_sweep(fitted, acceptance):
    t0 = time.perf_counter()
    wrong = []
    for p in SWEEP_P:
        for n in SWEEP_N:
            spec = EnsembleSpec(n, p, JAN, master_seed=1000 + n)
            ss = run_ensemble(spec, fitted["generator"])
            got, want = extreme_scenarios(ss), extreme_count(p, n)
            if got != want or ss.n_extreme != want or len(ss) != n:
                wrong.append((p, n, got, want))
    elapsed = time.perf_counter() - t0
    ok = acceptance("1", not wrong and elapsed < C1_SECONDS,
                    f"{len(SWEEP_P) * len(SWEEP_N)} ensembles, {len(wrong)} count mismatches, {elapsed:.1f}s (< {C1_SECONDS:.0f}s)")
    assert ok, wrong


# -- 2 ------------------------------------------------------------------------


def test_criterion_2_fixture_threshold(fixture_record, acceptance):
    series, meta = fixture_record
    got = define_extreme(series, 0.95).extreme_threshold
    exact = analytic_quantile(meta, 0.95)
    oracle = quantile_type7(series.values.tolist(), 0.95)
    err = max(abs(got - exact), abs(got - oracle))
    ok = acceptance("2 (synthetic fixture)", err <= FIXTURE_TOL,
                    f"95th percentile {got:.12g} mm/day, analytic {exact:.12g}, |diff| {err:.2e} (<= {FIXTURE_TOL:g})")
    assert ok


def load_maurer(path: Path) -> DailySeries:
    """A ``date,precip_mm`` CSV, or whitespace columns ``year month day prcp ...``."""
    text = path.read_text(encoding="utf-8-sig")
    first = text.split("\n", 1)[0]
    if "," in first:
        opts = CsvOptions(
            date_column=os.environ.get("STORMGEN_MAURER_DATE_COLUMN", "date"),
            value_column=os.environ.get("STORMGEN_MAURER_VALUE_COLUMN", "precip_mm"),
        )
        series = read_daily_csv(path, opts)
    else:
        rows = np.loadtxt(path, usecols=(0, 1, 2, 3))
        start = dt.date(int(rows[0, 0]), int(rows[0, 1]), int(rows[0, 2]))
        series = DailySeries(start, rows[:, 3])
    lo = max((dt.date(1949, 1, 1) - series.start_date).days, 0)
    hi = (dt.date(2010, 12, 31) - series.start_date).days + 1
    missing = None if series.missing is None else series.missing[lo:hi]
    return DailySeries(series.start_date + dt.timedelta(days=lo), series.values[lo:hi], series.station_id, missing)


def test_criterion_2_boston_threshold(acceptance):
    path = os.environ.get("STORMGEN_MAURER_CSV")
    if not path:
        acceptance("2 (Maurer Boston cell)", None, "not run: set STORMGEN_MAURER_CSV to the 1949-2010 daily series")
        pytest.skip("STORMGEN_MAURER_CSV not set")
    got = define_extreme(load_maurer(Path(path)), 0.95).extreme_threshold
    ok = acceptance("2 (Maurer Boston cell)", abs(got - BOSTON_THRESHOLD) <= BOSTON_TOL,
                    f"95th percentile {got:.4f} mm/day, expected {BOSTON_THRESHOLD} +/- {BOSTON_TOL}")
    assert ok


# -- 3 ------------------------------------------------------------------------


def seasonal_chain() -> np.ndarray:
    """A known per-month chain: wetter, stormier rows in late autumn."""
    base = np.array([[0.70, 0.25, 0.05], [0.40, 0.45, 0.15], [0.30, 0.50, 0.20]])
    shift = np.array([[-0.10, 0.08, 0.02], [-0.10, 0.08, 0.02], [-0.05, 0.03, 0.02]])
    return np.array([base + np.cos(2 * np.pi * (m - 10) / 12) * shift for m in range(12)])


def empirical_by_month(states: StateSequence) -> np.ndarray:
    counts, _ = transition_counts(states)
    return counts / counts.sum(axis=2, keepdims=True)


def markov_errors(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """(largest absolute entry, largest absolute row sum) of ``a - b`` over all months."""
    d = np.abs(a - b)
    return float(d.max()), float(d.sum(axis=2).max())


def markov_recovery(days: int, seed: int):
    truth = MonthlyMarkovModel(seasonal_chain(), np.full((12, 3), 1 / 3), np.ones(12, bool))
    start = dt.date(2001, 1, 1)
    rng = np.random.default_rng(seed)
    record = StateSequence(start, simulate_states(truth, start, days, rng))
    fitted = fit_markov(record)
    again = StateSequence(start, simulate_states(fitted, start, days, rng))
    return markov_errors(fitted.transitions, truth.transitions), markov_errors(empirical_by_month(again), fitted.transitions)


def test_criterion_3_markov_recovery(acceptance):
    t0 = time.perf_counter()
    (fit_entry, fit_row), (sim_entry, sim_row) = markov_recovery(MARKOV_DAYS, seed=3)
    elapsed = time.perf_counter() - t0
    ok = fit_entry <= MARKOV_TOL and sim_entry <= MARKOV_TOL and elapsed < C3_SECONDS
    acceptance(
        "3",
        ok,
        f"{MARKOV_DAYS} days over 12 monthly chains: fit-vs-truth {fit_entry:.4f} entrywise / {fit_row:.4f} row-sum, "
        f"resim-vs-fit {sim_entry:.4f} / {sim_row:.4f} (tol {MARKOV_TOL}), {elapsed:.1f}s",
    )
    assert ok


def test_criterion_3_supplement_per_month_sample(acceptance):
    # the same check with 10^5 days in every month rather than in total
    days = MARKOV_DAYS * 12
    (fit_entry, fit_row), (sim_entry, sim_row) = markov_recovery(days, seed=3)
    ok = max(fit_entry, sim_entry) <= MARKOV_TOL
    acceptance(
        "3 (supplement, 1e5 days per month)",
        ok,
        f"fit-vs-truth {fit_entry:.4f} entrywise / {fit_row:.4f} row-sum, resim-vs-fit {sim_entry:.4f} / {sim_row:.4f}",
    )
    assert ok


# -- 4 ------------------------------------------------------------------------


def test_criterion_4_evt_recovery(acceptance):
    worst = {"shape": 0.0, "scale": 0.0, "location": 0.0}
    failures = []
    for k, shape in enumerate((-0.2, 0.0, 0.2)):
        u = np.random.default_rng(400 + k).random(EVT_SAMPLES)
        f = fit_gpd_excesses(gpd_inverse_cdf(u, shape, 10.0), threshold=0.0)
        errs = {"shape": abs(f.shape - shape), "scale": abs(f.scale / 10.0 - 1)}
        g = fit_gev_maxima(gev_inverse_cdf(u, 30.0, 8.0, shape))
        gerrs = {"shape": abs(g.shape - shape), "scale": abs(g.scale / 8.0 - 1), "location": abs(g.location / 30.0 - 1)}
        for name, e in (("gpd", errs), ("gev", gerrs)):
            for key, v in e.items():
                worst[key] = max(worst[key], v)
                limit = SHAPE_TOL if key == "shape" else SCALE_REL_TOL
                if v > limit:
                    failures.append((name, shape, key, v))
    ok = acceptance(
        "4",
        not failures,
        f"GPD and GEV at shape -0.2/0/0.2, {EVT_SAMPLES} samples: worst |shape err| {worst['shape']:.4f} (<= {SHAPE_TOL}), "
        f"scale {worst['scale']:.2%}, location {worst['location']:.2%} (<= {SCALE_REL_TOL:.0%})",
    )
    assert ok, failures


# -- 5 ------------------------------------------------------------------------


def test_criterion_5_scores(acceptance):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        m = int(rng.integers(1, 21))
        ensemble = rng.gamma(2.0, 15.0, m)
        obs = float(rng.gamma(2.0, 15.0))
        worst = max(worst, abs(crps_ensemble(ensemble, obs) - crps_by_integration(ensemble.tolist(), obs)))
    brier = [
        abs(brier_score([1.0], [1]) - 0.0),
        abs(brier_score([0.5, 0.5], [0, 1]) - 0.25),
        abs(brier_score([0.3, 0.7, 0.9], [0, 1, 1]) - 0.19 / 3),
    ]
    ok = acceptance(
        "5",
        worst <= CRPS_TOL and max(brier) <= BRIER_TOL,
        f"CRPS vs integration over 100 ensembles: max |diff| {worst:.2e} (<= {CRPS_TOL:g}); "
        f"Brier hand values max |diff| {max(brier):.1e} (<= {BRIER_TOL:g})",
    )
    assert ok


# -- 6 ------------------------------------------------------------------------


def test_criterion_6_qq_fidelity(fitted, acceptance):
    t0 = time.perf_counter()
    series, definition = fitted["series"], fitted["definition"]
    p_year = empirical_extreme_probability(fitted["states"], None).p
    spec = EnsembleSpec(100, p_year, TargetPeriod(), master_seed=6)
    ss = run_ensemble(spec, WeatherGenerator(fit_markov(fitted["states"]), fit_intensity(series, definition)))
    sim = np.concatenate([s.series.values for s in ss.scenarios])
    sim, hist = sim[sim > 0], series.values[series.values > 0]
    # master seed fixed before any results were seen; see the notes on kernel boundary bias
    q_sim = np.array([quantile_type7(sim.tolist(), q) for q in QQ_LEVELS])
    q_hist = np.array([quantile_type7(hist.tolist(), q) for q in QQ_LEVELS])
    rel = np.abs(q_sim / q_hist - 1)
    ks = ks_statistic(sim, hist)
    elapsed = time.perf_counter() - t0
    ok = acceptance(
        "6",
        rel.max() <= QQ_REL_TOL and ks < KS_MAX and sim.size >= MIN_POOL and elapsed < C6_SECONDS,
        f"100 annual scenarios (P={p_year:g}), {sim.size} simulated / {hist.size} historical wet days: "
        f"worst quantile error {rel.max():.2%} at level {QQ_LEVELS[int(rel.argmax())]} (<= {QQ_REL_TOL:.0%}), "
        f"KS {ks:.4f} (< {KS_MAX}), {elapsed:.1f}s",
    )
    assert ok


# -- 7 ------------------------------------------------------------------------


def tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def pipeline_outputs(root: Path, fixture_csv: Path, bundle: Path, workers: int, extra: list) -> dict:
    common = ["--input", str(fixture_csv), "--out", str(root), "--bundle", str(bundle)]
    assert run(["generate", *common, "--seed", "20211105", "--workers", str(workers), *extra]) == 0
    assert run(["evaluate", *common, "--heldout", str(fixture_csv)]) == 0
    assert run(["report", *common]) == 0
    return tree_bytes(root)


def test_criterion_7_determinism(fixture_csv, tmp_path, acceptance):
    bundle = tmp_path / "bundle.json"
    assert run(["fit", "--input", str(fixture_csv), "--bundle", str(bundle), "--out", str(tmp_path)]) == 0
    cases = {
        "january": ["--n", "100", "--p", "0.3", "--month", "1", "--calibration", "climatology"],
        "annual": ["--n", "16", "--p", "0.5", "--month", "annual", "--format", "ndjson", "--calibration", "ar_model"],
    }
    diffs, files = [], 0
    for name, extra in cases.items():
        one = pipeline_outputs(tmp_path / name / "w1", fixture_csv, bundle, 1, extra)
        eight = pipeline_outputs(tmp_path / name / "w8", fixture_csv, bundle, 8, extra)
        files += len(one)
        if one != eight:
            diffs.append((name, sorted(k for k in set(one) | set(eight) if one.get(k) != eight.get(k))))
    ok = acceptance("7", not diffs, f"workers 1 vs 8: {files} output files compared (scenarios, metrics, report), "
                                    f"{len(diffs)} cases differ")
    assert ok, diffs


# -- 8 ------------------------------------------------------------------------


def test_criterion_8_calibration(fitted, acceptance):
    worst, problems, count = 0.0, [], 0
    cases = [(p, n, JAN) for p in SWEEP_P for n in SWEEP_N]
    cases += [(p, 10, TargetPeriod()) for p in (0.0, 0.5, 1.0)]
    for p, n, period in cases:
        spec = EnsembleSpec(n, p, period, master_seed=800 + n)
        ss = run_ensemble(spec, fitted["generator"])
        target = CALIBRATION_RATIO * float(ss.totals().mean())
        out = calibrate(ss, MeanForecast((1,), target, 0.0, "test"))
        count += 1
        rel = abs(float(out.totals().mean()) - target) / target
        worst = max(worst, rel)
        dry_kept = all(
            np.array_equal(a.series.values == 0, b.series.values == 0) for a, b in zip(ss.scenarios, out.scenarios)
        )
        want = extreme_count(p, n)
        if rel > CALIBRATION_REL_TOL or not dry_kept or extreme_scenarios(out) != want or out.n_extreme != want:
            problems.append((p, n, period.label(), rel, dry_kept, extreme_scenarios(out), want))
    ok = acceptance(
        "8",
        not problems,
        f"{count} ensembles calibrated to {CALIBRATION_RATIO}x their mean: worst relative error {worst:.1e} "
        f"(<= {CALIBRATION_REL_TOL:g}), dry days unchanged, count contract {'held' if not problems else 'broken'}",
    )
    assert ok, problems

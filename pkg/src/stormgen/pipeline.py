"""The fit, generate, evaluate and report stages behind the command line."""

from __future__ import annotations

import json
import logging
import math
import warnings
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bundle import ModelBundle, dumps, file_fingerprint
from .config import PipelineConfig
from .extremes import (
    define_extreme,
    empirical_extreme_probability,
    fit_gev,
    fit_gpd,
    prob_extreme_from_fit,
    prob_extreme_from_gev,
)
from .ingest import read_daily_csv
from .means import (
    MeanForecast,
    climatology_target,
    fit_annual_ar,
    fit_climatology,
    forecast_annual,
    tercile_to_target,
    to_period_target,
)
from .metrics import brier_score, crps_ensemble, ks_statistic, pooled_spell_stats, qq_data
from .store import StoredSet, manifest, read_scenarios, write_csv_dir, write_ndjson
from .timeseries import DailySeries, OccurrenceState, classify, month_runs
from .weathergen.ensemble import EnsembleSpec, ScenarioSet, TargetPeriod, calibrate, generate_ensemble
from .weathergen.intensity import fit_intensity
from .weathergen.markov import fit_markov

logger = logging.getLogger(__name__)


class PipelineError(Exception):
    """A domain failure attributed to one pipeline component."""

    def __init__(self, component: str, message: str):
        super().__init__(message)
        self.component = component


def r9(x: float) -> float:
    """Round to 9 significant digits for report output."""
    return float(f"{x:.9g}")


def _attributed(component: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (ValueError, ArithmeticError) as exc:
        raise PipelineError(component, str(exc)) from exc


def _load_series(cfg: PipelineConfig) -> DailySeries:
    if not cfg.input.path:
        raise PipelineError("config", "no input series given (input.path or --input)")
    return _attributed("ingest", read_daily_csv, cfg.input.path, cfg.input.csv_options())


# -- fit ---------------------------------------------------------------------


def fit_bundle(cfg: PipelineConfig) -> ModelBundle:
    """Fit every model component on the configured input series."""
    series = _load_series(cfg)
    x, g, m = cfg.extremes, cfg.generator, cfg.means
    notes: list[str] = []

    definition = _attributed("extreme_definition", define_extreme, series, x.percentile, x.wet_threshold, x.per_month)
    states = classify(series, definition)
    n_extreme = int(np.sum(states.states[series.observed] == OccurrenceState.EXTREME))
    if definition.degenerate:
        notes.append(
            f"extreme_definition: degenerate extreme threshold {definition.extreme_threshold!r} mm/day "
            f"at percentile {x.percentile!r}"
        )
    if n_extreme == 0:
        notes.append("extreme_definition: record contains no extreme days")

    markov = _attributed("markov", fit_markov, states, g.alpha)
    for month in np.flatnonzero(~markov.fitted).tolist():
        notes.append(f"markov: month {month + 1} has no data and is left unfit")
    intensity = _attributed("intensity", fit_intensity, series, definition, g.knn_k, g.bandwidth, g.kernel)
    climatology = _attributed("climatology", fit_climatology, series)
    if climatology.degenerate:
        notes.append("climatology: fitted on a single year")

    def optional(component, fn, *args):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            try:
                result = fn(*args)
            except (ValueError, ArithmeticError) as exc:
                notes.append(f"{component}: not fitted ({exc})")
                return None
        notes.extend(f"{component}: {w.message}" for w in caught)
        return result

    ar_model = optional("ar_model", fit_annual_ar, climatology.annual_totals, m.ar_order, m.ar_differencing)
    gpd = optional("gpd", fit_gpd, series, x.gpd_threshold, x.wet_threshold)
    gev = optional("gev", fit_gev, series, x.gev_block)

    empirical = {}
    for key, month in [(str(mm), mm) for mm in range(1, 13)] + [("year", None)]:
        p = optional("empirical_probability", empirical_extreme_probability, states, month)
        if p is not None:
            empirical[key] = p

    record = {
        "file": Path(cfg.input.path).name,
        "start_date": series.start_date.isoformat(),
        "end_date": series.end_date.isoformat(),
        "n_days": len(series),
        "n_missing": int(np.sum(~series.observed)),
        "n_extreme_days": n_extreme,
        "complete_years": len(climatology.annual_totals),
    }
    settings = {"extremes": _plain(x), "generator": _plain(g), "means": _plain(m)}
    for note in notes:
        logger.warning(note)
    return ModelBundle(
        fingerprint=file_fingerprint(cfg.input.path),
        station_id=cfg.input.station_id or series.station_id,
        record=record,
        settings=settings,
        definition=definition,
        climatology=climatology,
        markov=markov,
        intensity=intensity,
        empirical=empirical,
        ar_model=ar_model,
        gpd=gpd,
        gev=gev,
        warnings=notes,
    )


def _plain(section) -> dict:
    return dict(vars(section))


def cmd_fit(cfg: PipelineConfig) -> Path:
    bundle = fit_bundle(cfg)
    path = cfg.bundle_path
    path.parent.mkdir(parents=True, exist_ok=True)
    bundle.save(path)
    return path


# -- generate ----------------------------------------------------------------


def target_period(cfg: PipelineConfig) -> TargetPeriod:
    return TargetPeriod(cfg.ensemble.year, cfg.ensemble.month)


def resolve_probability(bundle: ModelBundle, period: TargetPeriod, source) -> tuple[float, str]:
    """The extreme fraction P: a number, or derived from one of the fitted models."""
    if not isinstance(source, str):
        return float(source), "fixed"
    month = period.month
    if source == "from:empirical":
        key = str(month) if month else "year"
        if key not in bundle.empirical:
            raise PipelineError("empirical_probability", f"no empirical extreme frequency for {key}")
        return bundle.empirical[key].p, source
    if source == "from:gpd":
        if bundle.gpd is None:
            raise PipelineError("gpd", "bundle has no GPD fit")
        prob = _attributed("gpd", prob_extreme_from_fit, bundle.gpd, bundle.definition, period.n_days, month)
        return prob.p, source
    if source == "from:gev":
        gev = bundle.gev
        if gev is None:
            raise PipelineError("gev", "bundle has no GEV fit")
        block = _attributed("gev", prob_extreme_from_gev, gev, bundle.definition, month)
        blocks = (1 if month else 12) if gev.block_length == "month" else period.n_days / gev.block_length
        p = block.p if blocks == 1 else -math.expm1(blocks * math.log1p(-block.p)) if block.p < 1 else 1.0
        return p, source
    raise PipelineError("config", f"unknown probability source {source!r}")


def calibration_target(bundle: ModelBundle, period: TargetPeriod, source: str) -> Optional[MeanForecast]:
    clim = bundle.climatology
    month, year = period.month, period.year
    if source == "none":
        return None
    if source == "climatology":
        return _attributed("climatology", climatology_target, clim, month, year)
    if source == "ar_model":
        if bundle.ar_model is None:
            raise PipelineError("ar_model", "bundle has no AR model")
        last = clim.annual_totals[-1][0]
        horizon = max(1, (year or last + 1) - last)
        annual = _attributed("ar_model", forecast_annual, bundle.ar_model, clim.annual_totals, horizon)[-1]
        return _attributed("ar_model", to_period_target, annual, clim, month, year)
    if source.startswith("tercile:"):
        annual = _attributed("tercile", tercile_to_target, source.split(":", 1)[1], clim)
        return _attributed("tercile", to_period_target, annual, clim, month, year)
    raise PipelineError("config", f"unknown calibration source {source!r}")


def check_fingerprint(cfg: PipelineConfig, bundle: ModelBundle, force: bool) -> None:
    if not cfg.input.path:
        return
    current = file_fingerprint(cfg.input.path)
    if current != bundle.fingerprint:
        if not force:
            raise PipelineError(
                "fingerprint", f"input {cfg.input.path} does not match the bundle's data fingerprint (use --force)"
            )
        logger.warning("bundle fingerprint mismatch ignored (--force)")


def generate(cfg: PipelineConfig, bundle: ModelBundle) -> tuple[ScenarioSet, Optional[MeanForecast], str]:
    e = cfg.ensemble
    period = _attributed("ensemble", target_period, cfg)
    p, p_source = resolve_probability(bundle, period, e.p)
    spec = _attributed("ensemble", EnsembleSpec, e.n, p, period, e.master_seed, None, e.max_attempts)
    scenario_set = _attributed(
        "weathergen", generate_ensemble, spec, bundle.markov, bundle.intensity, bundle.definition, e.workers
    )
    target = calibration_target(bundle, period, e.calibration)
    if target is not None:
        scenario_set = _attributed("calibration", calibrate, scenario_set, target)
    return scenario_set, target, p_source


def cmd_generate(cfg: PipelineConfig, force: bool = False) -> Path:
    bundle = ModelBundle.load(cfg.bundle_path)
    check_fingerprint(cfg, bundle, force)
    scenario_set, target, p_source = generate(cfg, bundle)
    header = manifest(scenario_set, bundle.fingerprint, target, p_source)
    out = cfg.scenarios_path
    if cfg.output.format == "ndjson":
        return write_ndjson(scenario_set, out, header)
    if out.is_dir():
        for stale in out.glob("scenario_*.csv"):
            stale.unlink()
    return write_csv_dir(scenario_set, out, header)


# -- evaluate ----------------------------------------------------------------


def period_instances(series: DailySeries, year: Optional[int], month: Optional[int]) -> list[tuple[str, np.ndarray]]:
    """Complete, fully observed occurrences of a target period in ``series``."""
    values, observed = series.values, series.observed
    out = []
    if month is not None:
        for y, m, a, b, partial in month_runs(series.start_date, len(series)):
            if m == month and not partial and (year is None or y == year) and observed[a:b].all():
                out.append((f"{y}-{m:02d}", values[a:b]))
        return out
    years = series.years()
    for y in np.unique(years).tolist():
        sel = years == y
        n_year = 366 if (y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)) else 365
        if sel.sum() == n_year and observed[sel].all() and (year is None or y == year):
            out.append((str(y), values[sel]))
    return out


def evaluate(cfg: PipelineConfig, scenarios: StoredSet, historical: DailySeries,
             heldout: Optional[DailySeries]) -> tuple[dict, list[tuple[float, float, float]], dict]:
    """(metrics document, QQ rows, spell statistics) for one scenario set."""
    head = scenarios.manifest["ensemble"]
    year, month = head["period"]["year"], head["period"]["month"]
    definition = scenarios.definition
    wet_only = cfg.evaluate.wet_only

    sim_days = np.concatenate([s.series.values for s in scenarios.scenarios])
    sel = historical.observed if month is None else historical.observed & (historical.months() == month)
    hist_days = historical.values[sel]
    if wet_only:
        sim_days = sim_days[sim_days >= definition.wet_threshold]
        hist_days = hist_days[hist_days >= definition.wet_threshold]
    if sim_days.size == 0 or hist_days.size == 0:
        raise PipelineError("metrics", "empty comparison pool")
    qq = qq_data(sim_days, hist_days, cfg.evaluate.qq_points)
    ks = ks_statistic(sim_days, hist_days)

    hist_states = classify(historical, definition).states
    hist_runs = []
    if month is None:
        hist_runs.append(hist_states[historical.observed])
    else:
        for _, m, a, b, _ in month_runs(historical.start_date, len(historical)):
            if m == month:
                hist_runs.append(hist_states[a:b][historical.observed[a:b]])
    spells = {
        "simulated": pooled_spell_stats(scenarios.states()).__dict__,
        "historical": pooled_spell_stats(hist_runs).__dict__,
    }

    totals = scenarios.totals()
    extreme_fraction = float(np.mean([s.metadata["contains_extreme"] for s in scenarios.scenarios]))
    crps: dict = {"status": "skipped", "reason": "no held-out observations given"}
    brier: dict = {"status": "skipped", "reason": "no held-out observations given"}
    if heldout is not None:
        instances = period_instances(heldout, year, month)
        if not instances:
            reason = "held-out data has no complete target period"
            crps = {"status": "skipped", "reason": reason}
            brier = {"status": "skipped", "reason": reason}
        else:
            ext = definition.extreme_for(month) if month else definition.extreme_threshold
            obs_totals = [float(v.sum()) for _, v in instances]
            outcomes = [int(np.any(v >= ext)) for _, v in instances]
            scores = [crps_ensemble(totals, t) for t in obs_totals]
            crps = {
                "status": "ok",
                "mean": r9(float(np.mean(scores))),
                "periods": [{"period": k, "observed_total": r9(t), "crps": r9(c)}
                            for (k, _), t, c in zip(instances, obs_totals, scores)],
            }
            brier = {
                "status": "ok",
                "forecast": r9(extreme_fraction),
                "score": r9(brier_score([extreme_fraction] * len(outcomes), outcomes)),
                "periods": [{"period": k, "outcome": o} for (k, _), o in zip(instances, outcomes)],
            }

    metrics = {
        "kind": "stormgen.evaluation",
        "schema_version": 1,
        "generator_version": __version__,
        "scenario_set": {
            "n": len(scenarios.scenarios),
            "n_extreme": int(sum(s.metadata["contains_extreme"] for s in scenarios.scenarios)),
            "period": head["period"]["label"],
            "mean_total": r9(float(totals.mean())),
            "sd_total": r9(float(totals.std(ddof=1))) if totals.size > 1 else 0.0,
        },
        "pool": {"days": "wet" if wet_only else "all", "n_simulated": int(sim_days.size),
                 "n_historical": int(hist_days.size)},
        "ks": r9(ks),
        "qq": {"file": "qq.csv", "n_points": cfg.evaluate.qq_points},
        "spells": {"file": "spells.csv"},
        "crps": crps,
        "brier": brier,
    }
    return metrics, list(qq.rows()), spells


SPELL_FIELDS = ("mean_dry_spell", "max_dry_spell", "mean_wet_spell", "max_wet_spell",
                "n_dry_spells", "n_wet_spells", "extreme_days")


def _g9(x) -> str:
    return str(x) if isinstance(x, int) else f"{x:.9g}"


def cmd_evaluate(cfg: PipelineConfig) -> Path:
    scenarios = read_scenarios(cfg.existing_scenarios_path())
    historical = _load_series(cfg)
    heldout = None
    if cfg.evaluate.heldout:
        heldout = _attributed("ingest", read_daily_csv, cfg.evaluate.heldout, cfg.input.csv_options())
    metrics, qq_rows, spells = evaluate(cfg, scenarios, historical, heldout)
    out = cfg.evaluation_dir
    out.mkdir(parents=True, exist_ok=True)
    lines = ["level,simulated,historical"] + [",".join(_g9(v) for v in row) for row in qq_rows]
    (out / "qq.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    lines = ["source," + ",".join(SPELL_FIELDS)]
    for source in ("simulated", "historical"):
        lines.append(source + "," + ",".join(_g9(spells[source][f]) for f in SPELL_FIELDS))
    (out / "spells.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "metrics.json").write_text(dumps(metrics), encoding="utf-8")
    return out


# -- report ------------------------------------------------------------------


def render_report(metrics: dict, spells_csv: str) -> str:
    s = metrics["scenario_set"]
    pool = metrics["pool"]
    lines = [
        "stormgen evaluation report",
        "",
        f"target period      {s['period']}",
        f"scenarios          {s['n']} ({s['n_extreme']} with an extreme day)",
        f"period total       mean {_g9(s['mean_total'])} mm, sd {_g9(s['sd_total'])} mm",
        f"comparison pool    {pool['days']} days, {pool['n_simulated']} simulated / {pool['n_historical']} historical",
        f"KS distance        {_g9(metrics['ks'])}",
    ]
    crps, brier = metrics["crps"], metrics["brier"]
    if crps["status"] == "ok":
        lines.append(f"CRPS (mean)        {_g9(crps['mean'])} mm over {len(crps['periods'])} period(s)")
    else:
        lines.append(f"CRPS               skipped: {crps['reason']}")
    if brier["status"] == "ok":
        lines.append(f"Brier score        {_g9(brier['score'])} (forecast {_g9(brier['forecast'])})")
    else:
        lines.append(f"Brier score        skipped: {brier['reason']}")
    rows = [r.split(",") for r in spells_csv.strip().splitlines()]
    lines += ["", "spell statistics"]
    width = max(len(h) for h in rows[0])
    lines.append("  ".join(h.ljust(width) for h in rows[0]))
    lines += ["  ".join(c.ljust(width) for c in r) for r in rows[1:]]
    return "\n".join(lines) + "\n"


def cmd_report(cfg: PipelineConfig) -> tuple[Path, str]:
    src = cfg.evaluation_dir
    try:
        metrics = json.loads((src / "metrics.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise PipelineError("report", f"{src / 'metrics.json'}: invalid JSON ({exc.msg})") from None
    text = render_report(metrics, (src / "spells.csv").read_text(encoding="utf-8"))
    path = src / "report.txt"
    path.write_text(text, encoding="utf-8")
    return path, text

"""Synthetic station record bundled with the package.

Occurrence follows a seasonal two-state (dry/wet) Markov chain. Wet-day
amounts are the stratified grid ``offset - mean * ln(1 - (i + 0.5) / W)``,
i = 0..W-1, of a shifted exponential, randomly permuted over the wet days.
Because the multiset of values is known exactly, any sample quantile of
the record has a closed form (see :func:`analytic_quantile`).

Run ``python -m stormgen.fixtures`` to rebuild the files under ``data/``.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from importlib import resources
from pathlib import Path

import numpy as np

from .ingest import read_daily_csv, write_daily_csv
from .timeseries import DailySeries, calendar_index

FIXTURE_NAME = "synthetic_station"
FIXTURE_PARAMS = {
    "start": "1981-01-01",
    "years": 30,
    "seed": 20211105,
    "wet_offset": 0.1,
    "wet_mean": 8.5,
}


def _chain(month: int) -> tuple[float, float]:
    """(P(wet | dry), P(wet | wet)) with a mild late-autumn wet peak."""
    phase = math.cos(2 * math.pi * (month - 11) / 12)
    return 0.24 + 0.04 * phase, 0.46 + 0.03 * phase


def synthetic_record(
    start: str = FIXTURE_PARAMS["start"],
    years: int = FIXTURE_PARAMS["years"],
    seed: int = FIXTURE_PARAMS["seed"],
    wet_offset: float = FIXTURE_PARAMS["wet_offset"],
    wet_mean: float = FIXTURE_PARAMS["wet_mean"],
) -> tuple[DailySeries, dict]:
    start_date = dt.date.fromisoformat(start)
    end = dt.date(start_date.year + years, start_date.month, start_date.day)
    n = (end - start_date).days
    rng = np.random.default_rng(seed)
    _, months, _ = calendar_index(start_date, n)
    u = rng.random(n)
    wet = np.zeros(n, dtype=bool)
    prev = False
    for i in range(n):
        p_dw, p_ww = _chain(int(months[i]))
        prev = u[i] < (p_ww if prev else p_dw)
        wet[i] = prev
    n_wet = int(wet.sum())
    grid = wet_offset - wet_mean * np.log1p(-(np.arange(n_wet) + 0.5) / n_wet)
    values = np.zeros(n)
    values[wet] = rng.permutation(grid)
    meta = {**FIXTURE_PARAMS, "start": start, "years": years, "seed": seed, "wet_offset": wet_offset,
            "wet_mean": wet_mean, "n_days": n, "n_wet": n_wet, "n_dry": n - n_wet}
    return DailySeries(start_date, values, FIXTURE_NAME), meta


def analytic_quantile(meta: dict, q: float) -> float:
    """Type-7 quantile of the fixture computed from its construction alone."""
    n, n_dry, n_wet = meta["n_days"], meta["n_dry"], meta["n_wet"]

    def order_stat(i: int) -> float:
        if i < n_dry:
            return 0.0
        return meta["wet_offset"] - meta["wet_mean"] * math.log1p(-(i - n_dry + 0.5) / n_wet)

    h = (n - 1) * q
    lo, hi = math.floor(h), math.ceil(h)
    return order_stat(lo) + (h - lo) * (order_stat(hi) - order_stat(lo))


def fixture_path() -> Path:
    return Path(str(resources.files("stormgen") / "data" / f"{FIXTURE_NAME}.csv"))


def load_fixture() -> tuple[DailySeries, dict]:
    path = fixture_path()
    meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    series = read_daily_csv(path)
    return DailySeries(series.start_date, series.values, FIXTURE_NAME), meta


def main() -> None:
    series, meta = synthetic_record()
    path = Path(__file__).parent / "data" / f"{FIXTURE_NAME}.csv"
    path.parent.mkdir(exist_ok=True)
    write_daily_csv(series, path)
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {path} ({meta['n_days']} days, {meta['n_wet']} wet)")


if __name__ == "__main__":
    main()

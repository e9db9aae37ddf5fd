"""Daily precipitation series, occurrence states and threshold classification."""

from __future__ import annotations

import calendar
import datetime as dt
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

DEFAULT_WET_THRESHOLD = 0.1  # mm/day, trace-precipitation cutoff


class OccurrenceState(IntEnum):
    """Day state; integer values fix the serialization order Dry < Wet < Extreme."""

    DRY = 0
    WET = 1
    EXTREME = 2


STATE_CODES = "DWE"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _as_date(value) -> dt.date:
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    if isinstance(value, np.datetime64):
        return value.astype("datetime64[D]").astype(dt.date)
    return dt.date.fromisoformat(str(value))


def calendar_index(start_date: dt.date, n_days: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (years, months, days-of-month) for ``n_days`` consecutive days."""
    dates = np.datetime64(start_date, "D") + np.arange(n_days)
    months_since_epoch = dates.astype("datetime64[M]").astype(np.int64)
    years = months_since_epoch // 12 + 1970
    months = months_since_epoch % 12 + 1
    dom = (dates - dates.astype("datetime64[M]").astype("datetime64[D]")).astype(np.int64) + 1
    return years, months, dom


def days_in_month(year: int, month: int) -> int:
    return calendar.monthrange(year, month)[1]


@dataclass(frozen=True, eq=False)
class DailySeries:
    """Precipitation depths (mm/day) for consecutive calendar days.

    ``missing`` optionally flags days filled in by ingestion; such days hold
    0.0 and are skipped by the fitting routines.
    """

    start_date: dt.date
    values: np.ndarray
    station_id: str = ""
    missing: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "start_date", _as_date(self.start_date))
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("a daily series needs at least one value")
        if not np.all(np.isfinite(values)):
            raise ValueError("precipitation values must be finite")
        if np.any(values < 0):
            raise ValueError("precipitation values must be >= 0")
        object.__setattr__(self, "values", _frozen(values))
        if self.missing is not None:
            missing = np.array(self.missing, dtype=bool)
            if missing.shape != values.shape:
                raise ValueError("missing mask must match values")
            object.__setattr__(self, "missing", _frozen(missing) if missing.any() else None)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            self.start_date == other.start_date
            and self.station_id == other.station_id
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.observed, other.observed)
        )

    __hash__ = None

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self) - 1)

    @property
    def observed(self) -> np.ndarray:
        """Boolean mask of days that carry a real observation."""
        if self.missing is None:
            return np.ones(len(self), dtype=bool)
        return ~self.missing

    def dates(self) -> np.ndarray:
        return np.datetime64(self.start_date, "D") + np.arange(len(self))

    def calendar(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return calendar_index(self.start_date, len(self))

    def months(self) -> np.ndarray:
        return self.calendar()[1]

    def years(self) -> np.ndarray:
        return self.calendar()[0]

    def with_values(self, values) -> "DailySeries":
        return DailySeries(self.start_date, values, self.station_id, self.missing)


@dataclass(frozen=True, eq=False)
class StateSequence:
    start_date: dt.date
    states: np.ndarray
    missing: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "start_date", _as_date(self.start_date))
        states = np.array(self.states, dtype=np.int8)
        if states.ndim != 1 or states.size < 1:
            raise ValueError("a state sequence needs at least one state")
        if states.min() < 0 or states.max() > 2:
            raise ValueError("states must be Dry(0), Wet(1) or Extreme(2)")
        object.__setattr__(self, "states", _frozen(states))
        if self.missing is not None:
            missing = np.array(self.missing, dtype=bool)
            object.__setattr__(self, "missing", _frozen(missing) if missing.any() else None)

    @classmethod
    def from_codes(cls, start_date, codes: str) -> "StateSequence":
        """Build from a string such as ``"DDWE"``."""
        return cls(start_date, [STATE_CODES.index(c) for c in codes])

    def __len__(self) -> int:
        return self.states.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, StateSequence):
            return NotImplemented
        return self.start_date == other.start_date and np.array_equal(self.states, other.states)

    __hash__ = None

    def codes(self) -> str:
        return "".join(STATE_CODES[s] for s in self.states)

    def calendar(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return calendar_index(self.start_date, len(self))

    @property
    def observed(self) -> np.ndarray:
        if self.missing is None:
            return np.ones(len(self), dtype=bool)
        return ~self.missing


@dataclass(frozen=True)
class ExtremeDefinition:
    """Threshold rule for the Dry/Wet/Extreme classification.

    A day is Wet when its value is >= ``wet_threshold`` and Extreme when it is
    >= the extreme threshold; both comparisons are inclusive. When
    ``monthly_extreme`` is set it holds one extreme threshold per calendar
    month (January first) and overrides ``extreme_threshold``.
    """

    wet_threshold: float
    extreme_threshold: float
    percentile_used: Optional[float] = None
    monthly_extreme: Optional[tuple[float, ...]] = None
    degenerate: bool = False

    def __post_init__(self):
        if not (math.isfinite(self.wet_threshold) and self.wet_threshold >= 0):
            raise ValueError("wet_threshold must be finite and >= 0")
        if not self.wet_threshold < self.extreme_threshold:
            raise ValueError("wet_threshold must be below extreme_threshold")
        if self.percentile_used is not None and not 0 < self.percentile_used < 1:
            raise ValueError("percentile_used must lie in (0, 1)")
        if self.monthly_extreme is not None:
            monthly = tuple(float(v) for v in self.monthly_extreme)
            if len(monthly) != 12:
                raise ValueError("monthly_extreme needs 12 thresholds")
            if any(not v > self.wet_threshold for v in monthly):
                raise ValueError("every monthly extreme threshold must exceed wet_threshold")
            object.__setattr__(self, "monthly_extreme", monthly)

    def extreme_for(self, month: int) -> float:
        if self.monthly_extreme is None:
            return self.extreme_threshold
        return self.monthly_extreme[month - 1]

    def extreme_thresholds(self, months: np.ndarray) -> np.ndarray | float:
        if self.monthly_extreme is None:
            return self.extreme_threshold
        return np.asarray(self.monthly_extreme)[np.asarray(months) - 1]

    def bounds(self, state: OccurrenceState, month: int) -> tuple[float, float]:
        """Half-open value interval [lower, upper) belonging to ``state``."""
        upper_extreme = self.extreme_for(month)
        if state == OccurrenceState.WET:
            return self.wet_threshold, upper_extreme
        if state == OccurrenceState.EXTREME:
            return upper_extreme, math.inf
        return 0.0, self.wet_threshold


def classify_values(values: np.ndarray, months: np.ndarray | None, definition: ExtremeDefinition) -> np.ndarray:
    values = np.asarray(values)
    extreme = definition.extreme_thresholds(months) if definition.monthly_extreme else definition.extreme_threshold
    states = np.zeros(values.shape, dtype=np.int8)
    states[values >= definition.wet_threshold] = OccurrenceState.WET
    states[values >= extreme] = OccurrenceState.EXTREME
    return states


def classify(series: DailySeries, definition: ExtremeDefinition) -> StateSequence:
    """Map every day to Dry, Wet or Extreme under ``definition``."""
    months = series.months() if definition.monthly_extreme is not None else None
    return StateSequence(series.start_date, classify_values(series.values, months, definition), series.missing)


def empirical_quantile(values: Sequence[float], q):
    """Type-7 sample quantile.

    The sorted sample is indexed at ``h = (n - 1) * q`` and linearly
    interpolated between ``floor(h)`` and ``ceil(h)``. ``q`` may be a scalar
    or an array of levels.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    qs = np.asarray(q, dtype=np.float64)
    if np.any((qs < 0) | (qs > 1)):
        raise ValueError("quantile level must lie in [0, 1]")
    h = (x.size - 1) * qs
    lo = np.floor(h).astype(np.int64)
    hi = np.ceil(h).astype(np.int64)
    out = x[lo] + (h - lo) * (x[hi] - x[lo])
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class MonthRun:
    year: int
    month: int
    start_index: int
    values: np.ndarray
    partial: bool

    def __len__(self) -> int:
        return self.values.size

    @property
    def indices(self) -> range:
        return range(self.start_index, self.start_index + self.values.size)


def month_runs(start_date: dt.date, n_days: int) -> list[tuple[int, int, int, int, bool]]:
    """(year, month, start, stop, partial) for each calendar-month run."""
    years, months, dom = calendar_index(start_date, n_days)
    breaks = np.flatnonzero(dom == 1)
    starts = np.unique(np.concatenate(([0], breaks)))
    stops = np.append(starts[1:], n_days)
    runs = []
    for a, b in zip(starts.tolist(), stops.tolist()):
        y, m = int(years[a]), int(months[a])
        runs.append((y, m, a, b, (b - a) != days_in_month(y, m)))
    return runs


def monthly_slices(series: DailySeries) -> dict[int, list[MonthRun]]:
    """Split a series into per-calendar-month runs, keyed by month of year.

    Runs at either edge that do not cover the whole month are kept and
    flagged ``partial``.
    """
    out: dict[int, list[MonthRun]] = {}
    for y, m, a, b, partial in month_runs(series.start_date, len(series)):
        out.setdefault(m, []).append(MonthRun(y, m, a, series.values[a:b], partial))
    return out

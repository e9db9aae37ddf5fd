"""Scenario and conditioned-ensemble generation."""

from __future__ import annotations

import datetime as dt
import hashlib
import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_EVEN, Decimal
from functools import partial
from typing import Optional, Sequence, Union

import numpy as np

from ..means import MeanForecast
from ..timeseries import (
    DailySeries,
    ExtremeDefinition,
    OccurrenceState,
    StateSequence,
    calendar_index,
    classify_values,
    days_in_month,
)
from .intensity import IntensityModel, draw_raw, place, scale_within
from .markov import MonthlyMarkovModel, simulate_states

logger = logging.getLogger(__name__)

REFERENCE_YEAR = 2001  # non-leap year used when a period names only a month
MAX_ATTEMPTS = 1000
MAX_CALIBRATION_ROUNDS = 5
_U64 = (1 << 64) - 1


class ConditioningError(ValueError):
    """The requested extreme-scenario split cannot be produced."""


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class TargetPeriod:
    """A calendar year, a month of a given year, or a bare month of year."""

    year: Optional[int] = None
    month: Optional[int] = None

    def __post_init__(self):
        if self.month is not None and not 1 <= self.month <= 12:
            raise ValueError("month must be 1..12")

    @property
    def start_date(self) -> dt.date:
        return dt.date(self.year or REFERENCE_YEAR, self.month or 1, 1)

    @property
    def n_days(self) -> int:
        year = self.year or REFERENCE_YEAR
        if self.month is None:
            return (dt.date(year + 1, 1, 1) - dt.date(year, 1, 1)).days
        return days_in_month(year, self.month)

    def label(self) -> str:
        if self.month is None:
            return f"{self.year or REFERENCE_YEAR}"
        return f"{self.year}-{self.month:02d}" if self.year else f"month-{self.month:02d}"


@dataclass(frozen=True)
class EnsembleSpec:
    """N scenarios of which a fraction P contain at least one Extreme day."""

    n: int
    p: float
    period: TargetPeriod
    master_seed: int = 0
    calibration_target: Optional[MeanForecast] = None
    max_attempts: int = MAX_ATTEMPTS

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N must be >= 1")
        if not 0 <= self.p <= 1:
            raise ValueError("P must lie in [0, 1]")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")

    @property
    def n_extreme(self) -> int:
        return extreme_count(self.p, self.n)


def extreme_count(p: float, n: int) -> int:
    """``round_half_even(p * n)`` evaluated on the decimal form of ``p``."""
    return int((Decimal(repr(float(p))) * n).quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def derive_seed(master_seed: int, index: int, attempt: int) -> int:
    """Stable 64-bit seed for one scenario attempt."""
    payload = struct.pack("<QQQ", master_seed & _U64, index & _U64, attempt & _U64)
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


@dataclass(frozen=True, eq=False)
class Scenario:
    """One generated series with its provenance.

    ``resampled`` marks scenarios whose calibrated amounts came from the
    sampler's in-interval scaling rather than from plain rescaling.
    """

    series: DailySeries
    states: StateSequence
    index: int
    seed: int
    contains_extreme: bool
    rejections_used: int = 0
    forced: bool = False
    resampled: bool = False

    def metadata(self) -> dict:
        return {
            "scenario_index": self.index,
            "seed": self.seed,
            "contains_extreme": self.contains_extreme,
            "rejections_used": self.rejections_used,
            "forced": self.forced,
            "resampled": self.resampled,
        }


@dataclass(frozen=True, eq=False)
class WeatherGenerator:
    """The baseline generator: Markov occurrence plus analogue intensities.

    KNN contexts always use unscaled amounts, so one seed yields the same
    draws at every ``scale`` and only the placement of each amount changes.
    """

    markov: MonthlyMarkovModel
    intensity: IntensityModel

    @property
    def definition(self) -> ExtremeDefinition:
        return self.intensity.definition

    def scenario(
        self, start_date: dt.date, n_days: int, seed: int, scale: float = 1.0, want_extreme: Optional[bool] = None
    ) -> tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
        """(states, amounts, raw draws) for one seed.

        With ``want_extreme`` set, a state path of the wrong class is returned
        without amounts (None), skipping the intensity draws.
        """
        rng = np.random.default_rng(seed)
        states = simulate_states(self.markov, start_date, n_days, rng)
        if want_extreme is not None and bool(np.any(states == OccurrenceState.EXTREME)) != want_extreme:
            return states, None, None
        _, months, _ = calendar_index(start_date, n_days)
        values = np.zeros(n_days)
        raw = np.full(n_days, np.nan)
        prev = None
        for i in range(n_days):
            s = int(states[i])
            base = 0.0
            if s != OccurrenceState.DRY:
                m = int(months[i])
                r = draw_raw(self.intensity, m, s, prev, rng)
                raw[i] = r
                base = place(self.intensity, m, s, r)
                values[i] = base if scale == 1.0 else place(self.intensity, m, s, r, scale)
            prev = base
        return states, values, raw

    def force(
        self,
        start_date: dt.date,
        states: np.ndarray,
        raw: np.ndarray,
        want_extreme: bool,
        seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Promote one random day to Extreme, or demote every Extreme day.

        Returns the edited (states, raw); amounts follow from :meth:`amounts`.
        """
        rng = np.random.default_rng(seed)
        states, raw = states.copy(), raw.copy()
        _, months, _ = calendar_index(start_date, states.size)
        base = self.amounts(start_date, states, raw)
        if want_extreme:
            eligible = [i for i in range(states.size) if self.intensity.has_pool(int(months[i]), OccurrenceState.EXTREME)]
            i = eligible[rng.integers(len(eligible))]
            prev = float(base[i - 1]) if i else None
            states[i] = OccurrenceState.EXTREME
            raw[i] = draw_raw(self.intensity, int(months[i]), OccurrenceState.EXTREME, prev, rng)
        else:
            for i in np.flatnonzero(states == OccurrenceState.EXTREME).tolist():
                m = int(months[i])
                if self.intensity.has_pool(m, OccurrenceState.WET):
                    prev = float(base[i - 1]) if i else None
                    states[i] = OccurrenceState.WET
                    raw[i] = draw_raw(self.intensity, m, OccurrenceState.WET, prev, rng)
                    base[i] = place(self.intensity, m, OccurrenceState.WET, raw[i])
                else:
                    states[i] = OccurrenceState.DRY
                    raw[i] = np.nan
                    base[i] = 0.0
        return states, raw

    def amounts(self, start_date: dt.date, states: np.ndarray, raw: np.ndarray, scale: float = 1.0) -> np.ndarray:
        """Amounts for given raw draws at an in-sampler ``scale``."""
        _, months, _ = calendar_index(start_date, states.size)
        out = np.zeros(states.size)
        for i in np.flatnonzero(states != OccurrenceState.DRY).tolist():
            out[i] = place(self.intensity, int(months[i]), int(states[i]), float(raw[i]), scale)
        return out


def generate_scenario(
    markov: MonthlyMarkovModel,
    intensity: IntensityModel,
    definition: ExtremeDefinition,
    start: Union[int, dt.date],
    n_days: int,
    seed: int,
    scale: float = 1.0,
) -> DailySeries:
    """One synthetic daily series.

    ``start`` is a start date, or a month number which places the series at
    the first of that month in a non-leap reference year. Dry days are 0.0;
    the result classifies back to the simulated occurrence states.
    """
    if definition != intensity.definition:
        raise ValueError("intensity model was fitted under a different extreme definition")
    start_date = dt.date(REFERENCE_YEAR, start, 1) if isinstance(start, int) else start
    _, values, _ = WeatherGenerator(markov, intensity).scenario(start_date, n_days, seed, scale)
    return DailySeries(start_date, values)


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]
    spec: EnsembleSpec
    definition: ExtremeDefinition
    calibration_factor: float = 1.0
    calibration_rounds: int = 0

    def __len__(self) -> int:
        return len(self.scenarios)

    @property
    def n_extreme(self) -> int:
        return sum(s.contains_extreme for s in self.scenarios)

    def totals(self) -> np.ndarray:
        return np.array([s.series.values.sum() for s in self.scenarios])

    def forced_count(self) -> int:
        return sum(s.forced for s in self.scenarios)


def _contains_extreme(values: np.ndarray, months: np.ndarray, definition: ExtremeDefinition) -> bool:
    return bool(np.any(classify_values(values, months, definition) == OccurrenceState.EXTREME))


def _build_scenario(
    generator: WeatherGenerator,
    period: TargetPeriod,
    master_seed: int,
    max_attempts: int,
    want_extreme: bool,
    index: int,
    scale: float = 1.0,
) -> Scenario:
    start, n = period.start_date, period.n_days
    _, months, _ = calendar_index(start, n)
    for attempt in range(max_attempts):
        seed = derive_seed(master_seed, index, attempt)
        states, values, raw = generator.scenario(start, n, seed, scale, want_extreme)
        if values is not None:
            break
    else:
        _, _, raw = generator.scenario(start, n, seed, scale)
        seed = derive_seed(master_seed, index, max_attempts)
        states, raw = generator.force(start, states, raw, want_extreme, seed)
        values = generator.amounts(start, states, raw, scale)
        attempt = max_attempts
        logger.debug("scenario %d forced after %d attempts", index, max_attempts)
    observed = classify_values(values, months, generator.definition)
    if not np.array_equal(observed, states):
        raise AssertionError(f"scenario {index}: amounts disagree with simulated occurrence")
    return Scenario(
        series=DailySeries(start, values, f"scenario-{index:04d}"),
        states=StateSequence(start, states),
        index=index,
        seed=seed,
        contains_extreme=want_extreme,
        rejections_used=attempt,
        forced=attempt >= max_attempts,
        resampled=scale != 1.0,
    )


def _check_feasible(generator: WeatherGenerator, period: TargetPeriod, n_extreme: int) -> None:
    _, months, _ = calendar_index(period.start_date, period.n_days)
    for m in np.unique(months).tolist():
        generator.markov.check_month(int(m))
    if n_extreme > 0 and not any(generator.intensity.has_pool(int(m), OccurrenceState.EXTREME) for m in np.unique(months)):
        raise ConditioningError("extreme scenarios requested but no Extreme-day analogues exist")


def _run(job, indices: Sequence[int], wants: Sequence[bool], workers: int) -> list[Scenario]:
    if workers <= 1 or len(indices) < 2:
        return [job(w, i) for i, w in zip(indices, wants)]
    chunk = max(1, len(indices) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, wants, indices, chunksize=chunk))


def run_ensemble(spec: EnsembleSpec, generator: WeatherGenerator, workers: int = 1) -> ScenarioSet:
    """Generate ``spec.n`` scenarios, the first ``spec.n_extreme`` of which
    contain at least one Extreme day and the rest none.

    Each scenario is redrawn (seed = hash of master seed, index, attempt)
    until its class matches, then forced after ``spec.max_attempts``. The
    per-index seeds make the result independent of ``workers``.
    """
    n_e = spec.n_extreme
    _check_feasible(generator, spec.period, n_e)
    job = partial(_build_scenario, generator, spec.period, spec.master_seed, spec.max_attempts)
    indices = list(range(spec.n))
    wants = [i < n_e for i in indices]
    scenarios = _run(job, indices, wants, workers)
    forced = sum(s.forced for s in scenarios)
    if forced:
        logger.warning("%d of %d scenarios were forced into their class", forced, spec.n)
    return ScenarioSet(tuple(scenarios), spec, generator.definition)


def generate_ensemble(
    spec: EnsembleSpec,
    markov: MonthlyMarkovModel,
    intensity: IntensityModel,
    definition: ExtremeDefinition,
    workers: int = 1,
) -> ScenarioSet:
    if definition != intensity.definition:
        raise ValueError("intensity model was fitted under a different extreme definition")
    return run_ensemble(spec, WeatherGenerator(markov, intensity), workers)


def calibrate(
    scenario_set: ScenarioSet,
    target: MeanForecast,
    max_rounds: int = MAX_CALIBRATION_ROUNDS,
) -> ScenarioSet:
    """Rescale amounts so the ensemble-mean period total equals ``target.mean``.

    All nonzero amounts are multiplied by one common factor. A scenario whose
    extreme class would flip is instead regenerated with the factor applied
    inside the intensity sampler: its states are kept and every amount is
    scaled within its state's interval (:func:`scale_within`), which is what
    the sampler returns for the same seed at that scale. The common factor
    is then solved again so that the mean stays on target, and the batch of
    regenerated scenarios grows until no plain-scaled scenario flips at the
    re-solved factor. Each round that finds offenders costs one of
    ``max_rounds``; a round without offenders returns.
    """
    if not target.mean > 0:
        raise CalibrationError("calibration target mean must be > 0")
    definition = scenario_set.definition
    scenarios = list(scenario_set.scenarios)
    months = [s.series.months() for s in scenarios]
    current = [s.series.values for s in scenarios]
    base_totals = np.array([v.sum() for v in current])
    if not base_totals.mean() > 0:
        raise CalibrationError("ensemble mean total must be > 0")
    resampled: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def interval(i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        states = scenarios[i].states.states
        wet = np.flatnonzero(states != OccurrenceState.DRY)
        extreme = np.broadcast_to(definition.extreme_thresholds(months[i][wet]), wet.shape)
        is_ext = states[wet] == OccurrenceState.EXTREME
        return wet, np.where(is_ext, extreme, definition.wet_threshold), np.where(is_ext, np.inf, extreme)

    def rebuilt(i: int, factor: float) -> np.ndarray:
        wet, lo, hi = resampled[i]
        v = np.zeros_like(current[i])
        v[wet] = scale_within(current[i][wet], lo, hi, factor)
        return v

    def mean_total(factor: float) -> float:
        plain = sum(base_totals[i] for i in range(len(scenarios)) if i not in resampled) * factor
        return (plain + sum(rebuilt(i, factor).sum() for i in resampled)) / len(scenarios)

    guess = target.mean / base_totals.mean()

    def solve() -> float:
        return _solve_factor(mean_total, target.mean, guess) if resampled else guess

    def offenders_at(factor: float) -> list[int]:
        return [
            i
            for i, s in enumerate(scenarios)
            if i not in resampled and _contains_extreme(current[i] * factor, months[i], definition) != s.contains_extreme
        ]

    for rnd in range(1, max_rounds + 1):
        factor = solve()
        offenders = offenders_at(factor)
        if not offenders:
            out = []
            for i, s in enumerate(scenarios):
                if i in resampled:
                    out.append(replace(s, series=s.series.with_values(rebuilt(i, factor)), resampled=True))
                else:
                    v = current[i] * factor
                    states = StateSequence(s.series.start_date, classify_values(v, months[i], definition))
                    out.append(replace(s, series=s.series.with_values(v), states=states))
            return replace(
                scenario_set,
                scenarios=tuple(out),
                calibration_factor=scenario_set.calibration_factor * factor,
                calibration_rounds=rnd,
            )
        # Re-solving moves the factor away from 1 and can flip further
        # scenarios; the batch grows until it is consistent at its own factor.
        while offenders:
            resampled.update((i, interval(i)) for i in offenders)
            offenders = offenders_at(solve())
        logger.info("calibration round %d: %d scenarios resampled", rnd, len(resampled))
    raise CalibrationError("calibration conflicts with extreme conditioning")


def _solve_factor(mean_total, target: float, guess: float) -> float:
    """Root of the increasing ``mean_total(f) = target``, bracketed by geometric steps from ``guess``."""
    from scipy.optimize import brentq

    def g(f):
        return mean_total(f) - target

    step = 1.25
    a = b = guess
    ga = gb = g(guess)
    for _ in range(200):
        if ga == 0:
            return a
        if gb == 0:
            return b
        if (ga < 0) != (gb < 0):
            return brentq(g, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        if gb < 0:
            a, ga = b, gb
            b *= step
            gb = g(b)
        else:
            b, gb = a, ga
            a /= step
            ga = g(a)
    raise CalibrationError("calibration conflicts with extreme conditioning: target mean cannot be reached")

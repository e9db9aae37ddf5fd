"""Extreme-event definition and occurrence probabilities.

Shape parameters follow the Coles convention: ``shape > 0`` is heavy
tailed, ``shape < 0`` has a finite upper endpoint. Hosking's ``k`` used in
the L-moment literature is ``-shape``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Literal, Optional, Union

import numpy as np

from .timeseries import (
    DEFAULT_WET_THRESHOLD,
    DailySeries,
    ExtremeDefinition,
    OccurrenceState,
    StateSequence,
    empirical_quantile,
    month_runs,
)

logger = logging.getLogger(__name__)

SHAPE_EPS = 1e-6
EULER_GAMMA = 0.5772156649015329


class FitError(ValueError):
    """Raised when a sample cannot support an extreme-value fit."""


@dataclass(frozen=True)
class GPDFit:
    threshold: float
    shape: float
    scale: float
    exceedance_rate: float
    n_exceedances: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("GPD scale must be > 0")
        if not 0 <= self.exceedance_rate <= 1:
            raise ValueError("exceedance rate must lie in [0, 1]")
        if self.n_exceedances < 2:
            raise ValueError("GPD fit needs at least 2 exceedances")

    def survival(self, excess) -> np.ndarray:
        """P(X - u > excess | X > u)."""
        return gpd_survival(excess, self.shape, self.scale)


@dataclass(frozen=True)
class GEVFit:
    block_length: Union[int, Literal["month"]]
    location: float
    scale: float
    shape: float
    n_blocks: int

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("GEV scale must be > 0")
        if self.n_blocks < 3:
            raise ValueError("GEV fit needs at least 3 blocks")

    def cdf(self, x) -> np.ndarray:
        return gev_cdf(x, self.location, self.scale, self.shape)


@dataclass(frozen=True)
class ExtremeProbability:
    period: tuple[int, ...]
    p: float
    method: Literal["empirical", "gpd", "gev"]
    p_day: Optional[float] = None
    bounded_support: bool = False

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError("probability must lie in [0, 1]")


def sample_lmoments(x) -> tuple[float, float, float]:
    """First three sample L-moments from unbiased probability-weighted moments."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    n = x.size
    if n < 3:
        raise FitError("need at least 3 values for L-moments")
    i = np.arange(n, dtype=np.float64)
    b0 = x.mean()
    b1 = np.sum(i / (n - 1) * x) / n
    b2 = np.sum(i * (i - 1) / ((n - 1) * (n - 2)) * x) / n
    return float(b0), float(2 * b1 - b0), float(6 * b2 - 6 * b1 + b0)


def _l1_l2(x: np.ndarray) -> tuple[float, float]:
    x = np.sort(x)
    n = x.size
    b0 = x.mean()
    b1 = np.sum(np.arange(n) / (n - 1) * x) / n
    return float(b0), float(2 * b1 - b0)


def define_extreme(
    series: DailySeries,
    percentile: float = 0.95,
    wet_threshold: float = DEFAULT_WET_THRESHOLD,
    per_month: bool = False,
) -> ExtremeDefinition:
    """Extreme threshold as the type-7 ``percentile`` of all observed days.

    When the percentile does not exceed ``wet_threshold`` the threshold is
    lifted just above it and the definition is flagged degenerate, as it is
    when every value is equal.
    """
    if not 0 < percentile < 1:
        raise ValueError("percentile must lie in (0, 1)")
    values = series.values[series.observed]
    degenerate = bool(values.min() == values.max())

    def lifted(q: float) -> tuple[float, bool]:
        if q > wet_threshold:
            return q, False
        return float(np.nextafter(wet_threshold, np.inf)), True

    threshold, low = lifted(empirical_quantile(values, percentile))
    degenerate |= low
    monthly = None
    if per_month:
        months = series.months()[series.observed]
        monthly = []
        for m in range(1, 13):
            mv = values[months == m]
            t, low = lifted(empirical_quantile(mv, percentile)) if mv.size else (threshold, False)
            degenerate |= low
            monthly.append(t)
    if degenerate:
        logger.warning("degenerate extreme definition (threshold %.6g mm/day)", threshold)
    return ExtremeDefinition(wet_threshold, threshold, percentile, tuple(monthly) if monthly else None, degenerate)


def empirical_extreme_probability(states: StateSequence, month: Optional[int]) -> ExtremeProbability:
    """Fraction of complete historical months (or years, for ``month=None``)
    containing at least one Extreme day."""
    hits = total = 0
    if month is None:
        years, _, _ = states.calendar()
        for y in np.unique(years).tolist():
            sel = years == y
            n_year = 366 if (y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)) else 365
            if sel.sum() != n_year:
                continue
            total += 1
            hits += bool(np.any(states.states[sel] == OccurrenceState.EXTREME))
    else:
        for y, m, a, b, partial in month_runs(states.start_date, len(states)):
            if m != month or partial:
                continue
            total += 1
            hits += bool(np.any(states.states[a:b] == OccurrenceState.EXTREME))
    if total == 0:
        what = f"month {month}" if month else "calendar year"
        raise ValueError(f"no complete {what} in record")
    period = (month,) if month is not None else ()
    return ExtremeProbability(period, hits / total, "empirical")


def default_gpd_threshold(series: DailySeries, wet_threshold: float = DEFAULT_WET_THRESHOLD) -> float:
    """90th percentile of wet days."""
    values = series.values[series.observed]
    wet = values[values >= wet_threshold]
    if wet.size == 0:
        raise FitError("no wet days for a default GPD threshold")
    return float(empirical_quantile(wet, 0.9))


def fit_gpd_excesses(excesses, threshold: float = 0.0, n_days: Optional[int] = None) -> GPDFit:
    """L-moment GPD fit on positive excesses over ``threshold``.

    With l1, l2 the first two sample L-moments, ``shape = 2 - l1 / l2`` and
    ``scale = (1 - shape) * l1``.
    """
    y = np.asarray(excesses, dtype=np.float64)
    if y.size < 2:
        raise FitError("insufficient exceedances")
    l1, l2 = _l1_l2(y)
    if not l2 > 0:
        raise FitError("degenerate exceedance sample")
    shape = 2.0 - l1 / l2
    scale = (1.0 - shape) * l1
    if not scale > 0:
        raise FitError("GPD scale estimate not positive")
    n_days = y.size if n_days is None else n_days
    return GPDFit(threshold, float(shape), float(scale), y.size / n_days, int(y.size))


def fit_gpd(series: DailySeries, u: Optional[float] = None, wet_threshold: float = DEFAULT_WET_THRESHOLD) -> GPDFit:
    """Peaks-over-threshold fit on the days strictly above ``u``."""
    if u is None:
        u = default_gpd_threshold(series, wet_threshold)
    values = series.values[series.observed]
    exc = values[values > u] - u
    return fit_gpd_excesses(exc, u, values.size)


def block_maxima(series: DailySeries, block_length: Union[int, str] = "month") -> np.ndarray:
    """Maxima over complete non-overlapping blocks.

    ``block_length`` is a day count (blocks start at the first day) or
    ``"month"`` for calendar months; partial months and a trailing short
    block are dropped. Blocks holding missing days are dropped too.
    """
    values, observed = series.values, series.observed
    maxima = []
    if block_length == "month":
        for _, _, a, b, partial in month_runs(series.start_date, len(series)):
            if not partial and observed[a:b].all():
                maxima.append(values[a:b].max())
    else:
        n = int(block_length)
        if n < 1:
            raise ValueError("block_length must be >= 1")
        for a in range(0, len(values) - n + 1, n):
            if observed[a : a + n].all():
                maxima.append(values[a : a + n].max())
    return np.array(maxima)


def fit_gev_maxima(maxima, block_length: Union[int, str] = "month") -> GEVFit:
    """Hosking's L-moment GEV estimator.

    With ``t3 = l3 / l2`` and ``c = 2 / (3 + t3) - ln 2 / ln 3`` the
    approximation ``k = 7.8590 c + 2.9554 c^2`` gives Hosking's shape, which
    is negated on output.
    """
    x = np.asarray(maxima, dtype=np.float64)
    if x.size < 3:
        raise FitError(f"need at least 3 blocks, got {x.size}")
    l1, l2, l3 = sample_lmoments(x)
    if not l2 > 0:
        raise FitError("degenerate block maxima (all equal)")
    t3 = l3 / l2
    c = 2.0 / (3.0 + t3) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c
    if abs(k) < SHAPE_EPS:
        scale = l2 / math.log(2)
        loc = l1 - EULER_GAMMA * scale
        k = 0.0
    else:
        g = math.gamma(1 + k)
        scale = l2 * k / ((1 - 2.0 ** (-k)) * g)
        loc = l1 - scale * (1 - g) / k
    return GEVFit(block_length, float(loc), float(scale), float(-k) + 0.0, int(x.size))


def fit_gev(series: DailySeries, block_length: Union[int, str] = "month") -> GEVFit:
    return fit_gev_maxima(block_maxima(series, block_length), block_length)


def gpd_survival(excess, shape: float, scale: float) -> np.ndarray:
    z = np.asarray(excess, dtype=np.float64) / scale
    if abs(shape) < SHAPE_EPS:
        return np.exp(-z)
    base = 1.0 + shape * z
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(base > 0, np.power(np.maximum(base, 0.0), -1.0 / shape), 0.0)
    return out


def gev_cdf(x, loc: float, scale: float, shape: float) -> np.ndarray:
    z = (np.asarray(x, dtype=np.float64) - loc) / scale
    if abs(shape) < SHAPE_EPS:
        return np.exp(-np.exp(-z))
    base = 1.0 + shape * z
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(base > 0, np.power(np.maximum(base, 1e-300), -1.0 / shape), np.inf if shape > 0 else 0.0)
    return np.exp(-t)


def prob_extreme_from_fit(fit: GPDFit, definition: ExtremeDefinition, period_days: int, month: Optional[int] = None) -> ExtremeProbability:
    """Chance of at least one extreme day in ``period_days`` independent days.

    The daily probability is ``rate * S(T - u)`` with S the GPD survival
    function; beyond a finite upper endpoint it is zero and the result is
    flagged ``bounded_support``.
    """
    threshold = definition.extreme_for(month) if month else definition.extreme_threshold
    if threshold < fit.threshold:
        raise ValueError("extreme threshold lies below the GPD threshold")
    if period_days < 1:
        raise ValueError("period_days must be >= 1")
    excess = threshold - fit.threshold
    bounded = fit.shape < 0 and 1.0 + fit.shape * excess / fit.scale <= 0
    p_day = 0.0 if bounded else float(fit.exceedance_rate * gpd_survival(excess, fit.shape, fit.scale))
    p = -math.expm1(period_days * math.log1p(-p_day)) if p_day < 1 else 1.0
    period = (month,) if month else ()
    return ExtremeProbability(period, min(max(p, 0.0), 1.0), "gpd", p_day, bounded)


def prob_extreme_from_gev(fit: GEVFit, definition: ExtremeDefinition, month: Optional[int] = None) -> ExtremeProbability:
    """Chance that one block's maximum reaches the extreme threshold."""
    threshold = definition.extreme_for(month) if month else definition.extreme_threshold
    p = float(1.0 - fit.cdf(threshold))
    bounded = fit.shape < 0 and threshold >= fit.location - fit.scale / fit.shape
    period = (month,) if month else ()
    return ExtremeProbability(period, min(max(p, 0.0), 1.0), "gev", None, bounded)

"""Intensity model: KNN analogue selection plus kernel jitter.

Each (month, state) pool holds the historical amounts observed in that
month and state together with the amount of the preceding day. Sampling
ranks pool entries by how close their predecessor is to the simulated
previous day, picks one of the ``k`` nearest with weight ``1/rank`` and
perturbs it with Gaussian kernel noise, folded back into the state's
interval so occurrence and amount never disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Mapping, Optional, Union

import numpy as np

from ..timeseries import DailySeries, ExtremeDefinition, OccurrenceState, classify, empirical_quantile

Kernel = Literal["log", "linear"]
AMOUNT_STATES = (OccurrenceState.WET, OccurrenceState.EXTREME)
_TINY = float(np.finfo(float).tiny)


class NoAnalogueError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Pool:
    """Amounts and their predecessors; a NaN predecessor is never a neighbour."""

    values: np.ndarray
    predecessors: np.ndarray
    bandwidth: float

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        preds = np.array(self.predecessors, dtype=np.float64)
        if values.shape != preds.shape or values.ndim != 1:
            raise ValueError("values and predecessors must be 1-D and equal length")
        if self.bandwidth < 0:
            raise ValueError("bandwidth must be >= 0")
        values.setflags(write=False)
        preds.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "predecessors", preds)

    def __len__(self) -> int:
        return self.values.size


def silverman_bandwidth(x) -> float:
    """``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``; falls back to sd when the IQR is 0."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < 2:
        return 0.0
    sd = float(np.std(x, ddof=1))
    q25, q75 = empirical_quantile(x, [0.25, 0.75])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * x.size ** (-0.2)


def knn_size(pool_size: int, knn_k: Optional[int] = None) -> int:
    k = knn_k if knn_k is not None else max(5, math.ceil(math.sqrt(pool_size)))
    return max(1, min(k, pool_size))


@dataclass(frozen=True, eq=False)
class IntensityModel:
    """Per-(month, state) analogue pools for Wet and Extreme days.

    ``pools`` is keyed by ``(month, state)``; missing keys mean the month
    never showed that state, in which case sampling falls back to the pool
    of all months (``pooled``). ``kernel="log"`` jitters log amounts instead
    of amounts, which keeps small amounts from being smeared upwards.
    """

    definition: ExtremeDefinition
    pools: Mapping[tuple[int, int], Pool]
    pooled: Mapping[int, Pool] = field(default_factory=dict)
    knn_k: Optional[int] = None
    kernel: Kernel = "linear"

    def __post_init__(self):
        if self.kernel not in ("log", "linear"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.knn_k is not None and self.knn_k < 1:
            raise ValueError("knn_k must be >= 1")
        for (month, state), pool in self.pools.items():
            lo, hi = self.definition.bounds(OccurrenceState(state), month)
            if len(pool) and (pool.values.min() < lo or pool.values.max() >= hi):
                raise ValueError(f"pool ({month}, {state}) has values outside [{lo}, {hi})")

    @classmethod
    def from_values(
        cls,
        definition: ExtremeDefinition,
        pools: Mapping[tuple[int, int], object],
        bandwidth: Optional[float] = None,
        knn_k: Optional[int] = None,
        kernel: Kernel = "linear",
    ) -> "IntensityModel":
        """Build from bare value pools, each value acting as its own predecessor."""
        built = {}
        for key, values in pools.items():
            v = np.asarray(values, dtype=np.float64)
            h = bandwidth if bandwidth is not None else silverman_bandwidth(_to_kernel_space(v, kernel))
            built[key] = Pool(v, v, h)
        return cls(definition, built, {}, knn_k, kernel)

    def pool(self, month: int, state: int) -> Pool:
        pool = self.pools.get((month, int(state)))
        if pool is None or len(pool) == 0:
            pool = self.pooled.get(int(state))
        if pool is None or len(pool) == 0:
            raise NoAnalogueError(f"no historical analogue for month {month}, state {OccurrenceState(state).name}")
        return pool

    def has_pool(self, month: int, state: int) -> bool:
        try:
            self.pool(month, state)
        except NoAnalogueError:
            return False
        return True


def _to_kernel_space(values: np.ndarray, kernel: Kernel) -> np.ndarray:
    if kernel == "log":
        return np.log(np.maximum(values, _TINY))
    return values


def fit_intensity(
    series: DailySeries,
    definition: ExtremeDefinition,
    knn_k: Optional[int] = None,
    bandwidth: Union[None, float, Mapping[tuple[int, int], float]] = None,
    kernel: Kernel = "linear",
) -> IntensityModel:
    """Collect analogue pools from a historical series.

    ``bandwidth`` overrides Silverman's rule, either globally or per
    ``(month, state)``. Bandwidths are in kernel space (log mm for the log
    kernel).
    """
    states = classify(series, definition).states
    values = series.values
    observed = series.observed
    preds = np.concatenate(([np.nan], values[:-1]))
    preds[1:][~observed[:-1]] = np.nan
    _, months, _ = series.calendar()

    def bw(key, v):
        if isinstance(bandwidth, Mapping):
            if key in bandwidth:
                return float(bandwidth[key])
        elif bandwidth is not None:
            return float(bandwidth)
        return silverman_bandwidth(_to_kernel_space(v, kernel))

    pools, pooled = {}, {}
    for state in AMOUNT_STATES:
        in_state = (states == state) & observed
        v_all = values[in_state]
        if v_all.size:
            pooled[int(state)] = Pool(v_all, preds[in_state], bw((0, int(state)), v_all))
        for m in range(1, 13):
            sel = in_state & (months == m)
            if sel.any():
                v = values[sel]
                pools[(m, int(state))] = Pool(v, preds[sel], bw((m, int(state)), v))
    return IntensityModel(definition, pools, pooled, knn_k, kernel)


def fold(y: float, lo: float, hi: float) -> float:
    """Reflect ``y`` into ``[lo, hi)``; an infinite bound does not reflect."""
    if math.isinf(hi):
        if math.isinf(lo):
            return y
        return lo + abs(y - lo)
    if math.isinf(lo):
        return hi - abs(hi - y) if y >= hi else y
    width = hi - lo
    if width <= 0:
        return lo
    t = (y - lo) % (2 * width)
    if t > width:
        t = 2 * width - t
    return lo + t


def _choose(pool: Pool, k: int, context: Optional[float], rng: np.random.Generator) -> float:
    n = len(pool)
    if context is None:
        return float(pool.values[rng.integers(n)])
    dist = np.abs(pool.predecessors - context)
    dist[np.isnan(dist)] = np.inf
    # random secondary key so tied predecessors (dry days) are drawn fairly
    order = np.lexsort((rng.random(n), dist))[:k]
    weights = 1.0 / np.arange(1, k + 1)
    r = int(np.searchsorted(np.cumsum(weights), rng.random() * weights.sum(), side="right"))
    return float(pool.values[order[min(r, k - 1)]])


def draw_raw(
    model: IntensityModel,
    month: int,
    state: int,
    context_value: Optional[float],
    rng: np.random.Generator,
) -> float:
    """Analogue plus kernel noise, in kernel space and before folding."""
    state = OccurrenceState(state)
    if state not in AMOUNT_STATES:
        raise ValueError("amounts are only drawn for Wet or Extreme days")
    pool = model.pool(month, state)
    x = _choose(pool, knn_size(len(pool), model.knn_k), context_value, rng)
    noise = rng.standard_normal() * pool.bandwidth
    if model.kernel == "log":
        return math.log(max(x, _TINY)) + noise
    return x + noise


def scale_within(values, lo, hi, scale: float) -> np.ndarray:
    """Scale amounts by ``scale`` without leaving ``[lo, hi)``.

    On a bounded interval the odds ``(v - lo) / (hi - v)`` are multiplied by
    ``scale``; on ``[lo, inf)`` the excess ``v - lo`` is. Either way the map
    is the identity at 1, increasing in ``scale``, continuous, and
    ``scale_within(scale_within(v, a), b) == scale_within(v, a * b)`` up to
    rounding. Small amounts scale almost linearly.
    """
    v = np.asarray(values, dtype=np.float64)
    if scale == 1.0:
        return v.copy()
    lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), v.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), v.shape)
    x = v - lo
    finite = np.isfinite(hi)
    width = np.where(finite, hi - lo, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        bounded = scale * x * width / (width + (scale - 1.0) * x)
    out = lo + np.where(finite, bounded, scale * x)
    out = np.maximum(out, lo)
    return np.where(finite & (out >= hi), np.nextafter(hi, -np.inf), out)


def place(model: IntensityModel, month: int, state: int, raw: float, scale: float = 1.0) -> float:
    """Fold a raw draw into the state's interval, then scale it within that interval."""
    lo, hi = model.definition.bounds(OccurrenceState(state), month)
    if model.kernel == "log":
        log_lo = math.log(lo) if lo > 0 else -math.inf
        log_hi = math.log(hi) if math.isfinite(hi) else math.inf
        out = math.exp(fold(raw, log_lo, log_hi))
    else:
        out = fold(raw, lo, hi)
    # guard the interval against rounding in exp/fold
    if out < lo:
        out = lo
    if out >= hi:
        out = float(np.nextafter(hi, -np.inf))
    if scale != 1.0:
        out = float(scale_within(out, lo, hi, scale))
    return out


def sample_intensity(
    model: IntensityModel,
    month: int,
    state: int,
    context_value: Optional[float],
    rng: np.random.Generator,
    scale: float = 1.0,
) -> float:
    """Draw one amount (mm/day) for a Wet or Extreme day.

    ``context_value`` is the previous day's amount; None uses the whole
    pool with equal weights. ``scale`` rescales the folded sample within
    the state's interval (see :func:`scale_within`).
    """
    if not scale > 0:
        raise ValueError("scale must be > 0")
    return place(model, month, state, draw_raw(model, month, state, context_value, rng), scale)

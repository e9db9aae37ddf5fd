"""Verification metrics for probabilistic forecasts and generated scenarios."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .timeseries import OccurrenceState, StateSequence, empirical_quantile


@dataclass(frozen=True, eq=False)
class QQData:
    probs: np.ndarray
    sim_q: np.ndarray
    hist_q: np.ndarray

    def rows(self):
        return zip(self.probs.tolist(), self.sim_q.tolist(), self.hist_q.tolist())


@dataclass(frozen=True)
class SpellStats:
    mean_dry_spell: float
    max_dry_spell: int
    mean_wet_spell: float
    max_wet_spell: int
    n_dry_spells: int
    n_wet_spells: int
    extreme_days: int


def brier_score(forecasts: Sequence[float], outcomes: Sequence[int]) -> float:
    """Mean squared difference between forecast probabilities and 0/1 outcomes."""
    f = np.asarray(forecasts, dtype=np.float64)
    o = np.asarray(outcomes, dtype=np.float64)
    if f.shape != o.shape:
        raise ValueError("forecasts and outcomes differ in length")
    if f.size < 1:
        raise ValueError("need at least one forecast")
    if np.any((f < 0) | (f > 1)):
        raise ValueError("forecast probabilities must lie in [0, 1]")
    if np.any((o != 0) & (o != 1)):
        raise ValueError("outcomes must be 0 or 1")
    return float(np.mean((f - o) ** 2))


def crps_ensemble(ensemble: Sequence[float], obs: float) -> float:
    """CRPS of an ensemble's empirical CDF against one observation.

    Uses ``mean|x_i - y| - (1 / 2m^2) sum_ij |x_i - x_j|``; the double sum is
    evaluated from the sorted members in O(m log m).
    """
    x = np.sort(np.asarray(ensemble, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("empty ensemble")
    if not np.all(np.isfinite(x)) or not np.isfinite(obs):
        raise ValueError("ensemble and observation must be finite")
    m = x.size
    # sum_{i,j} |x_i - x_j| = 2 sum_i (2i - m + 1) x_(i) for 0-based sorted i
    pair_sum = 2.0 * np.sum((2 * np.arange(m) - m + 1) * x)
    return float(np.mean(np.abs(x - obs)) - pair_sum / (2.0 * m * m))


def qq_data(simulated, historical, n_points: int = 99) -> QQData:
    """Quantiles of both pools at the midpoint levels ``(i + 0.5) / n_points``."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    sim = np.asarray(simulated, dtype=np.float64)
    hist = np.asarray(historical, dtype=np.float64)
    if sim.size == 0 or hist.size == 0:
        raise ValueError("empty pool")
    probs = (np.arange(n_points) + 0.5) / n_points
    return QQData(probs, np.asarray(empirical_quantile(sim, probs)), np.asarray(empirical_quantile(hist, probs)))


def _runs(mask: np.ndarray) -> np.ndarray:
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.diff(padded)
    return np.flatnonzero(edges == -1) - np.flatnonzero(edges == 1)


def spell_stats(states: StateSequence) -> SpellStats:
    """Dry and wet spell lengths; Wet and Extreme days both count as wet."""
    return pooled_spell_stats([states.states])


def pooled_spell_stats(sequences: Iterable) -> SpellStats:
    """Spell statistics over several state arrays; no spell crosses a boundary."""
    dry, wet, n_ext = [], [], 0
    for seq in sequences:
        s = np.asarray(seq.states if isinstance(seq, StateSequence) else seq)
        dry.append(_runs(s == OccurrenceState.DRY))
        wet.append(_runs(s != OccurrenceState.DRY))
        n_ext += int(np.sum(s == OccurrenceState.EXTREME))
    dry = np.concatenate(dry) if dry else np.zeros(0, int)
    wet = np.concatenate(wet) if wet else np.zeros(0, int)
    return SpellStats(
        mean_dry_spell=float(dry.mean()) if dry.size else 0.0,
        max_dry_spell=int(dry.max()) if dry.size else 0,
        mean_wet_spell=float(wet.mean()) if wet.size else 0.0,
        max_wet_spell=int(wet.max()) if wet.size else 0,
        n_dry_spells=int(dry.size),
        n_wet_spells=int(wet.size),
        extreme_days=n_ext,
    )


def ks_statistic(a, b) -> float:
    """Two-sample Kolmogorov-Smirnov distance, evaluated at every sample point."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("empty pool")
    grid = np.concatenate((a, b))
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))

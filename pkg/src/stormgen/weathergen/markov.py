"""Per-month three-state first-order Markov occurrence model."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from ..timeseries import StateSequence, calendar_index

ROW_TOL = 1e-12
DEFAULT_ALPHA = 0.5


class UnfitMonthError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MonthlyMarkovModel:
    """Transition matrices ``transitions[m - 1]`` (rows: from Dry/Wet/Extreme)
    and initial distributions ``initial[m - 1]`` for each calendar month."""

    transitions: np.ndarray
    initial: np.ndarray
    fitted: np.ndarray
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        t = np.array(self.transitions, dtype=np.float64)
        p0 = np.array(self.initial, dtype=np.float64)
        fitted = np.array(self.fitted, dtype=bool)
        if t.shape != (12, 3, 3) or p0.shape != (12, 3) or fitted.shape != (12,):
            raise ValueError("expected 12 3x3 matrices, 12 initial vectors and 12 fit flags")
        if np.any(t < 0) or np.any(p0 < 0):
            raise ValueError("probabilities must be non-negative")
        if np.any(np.abs(t[fitted].sum(axis=2) - 1) > ROW_TOL):
            raise ValueError("transition rows must sum to 1")
        if np.any(np.abs(p0[fitted].sum(axis=1) - 1) > ROW_TOL):
            raise ValueError("initial distributions must sum to 1")
        for name, arr in (("transitions", t), ("initial", p0), ("fitted", fitted)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def uniform(cls, matrix, initial) -> "MonthlyMarkovModel":
        """The same chain in every month."""
        return cls(np.broadcast_to(matrix, (12, 3, 3)), np.broadcast_to(initial, (12, 3)), np.ones(12, bool))

    def check_month(self, month: int) -> None:
        if not 1 <= month <= 12:
            raise ValueError(f"month must be 1..12, got {month}")
        if not self.fitted[month - 1]:
            raise UnfitMonthError(f"month {month} has no fitted occurrence model")

    def stationary(self, month: int) -> np.ndarray:
        """Stationary distribution of one month's chain."""
        w, v = np.linalg.eig(self.transitions[month - 1].T)
        pi = np.real(v[:, np.argmin(np.abs(w - 1))])
        return pi / pi.sum()


def transition_counts(states: StateSequence) -> tuple[np.ndarray, np.ndarray]:
    """Raw (12, 3, 3) transition counts by destination month and (12, 3)
    state counts by month. Pairs touching a missing day are skipped."""
    _, months, _ = states.calendar()
    s = states.states.astype(np.intp)
    ok = states.observed
    pair_ok = ok[1:] & ok[:-1]
    trans = np.zeros((12, 3, 3))
    np.add.at(trans, (months[1:][pair_ok] - 1, s[:-1][pair_ok], s[1:][pair_ok]), 1)
    marg = np.zeros((12, 3))
    np.add.at(marg, (months[ok] - 1, s[ok]), 1)
    return trans, marg


def fit_markov(states: StateSequence, alpha: float = DEFAULT_ALPHA) -> MonthlyMarkovModel:
    """Additively smoothed transition frequencies per calendar month.

    ``T[i, j] = (n_ij + alpha) / (n_i. + 3 alpha)``; a transition belongs to
    the month of its destination day. Months with fewer than two observed
    days are left unfit.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    trans, marg = transition_counts(states)
    t = (trans + alpha) / (trans.sum(axis=2, keepdims=True) + 3 * alpha)
    p0 = (marg + alpha) / (marg.sum(axis=1, keepdims=True) + 3 * alpha)
    fitted = marg.sum(axis=1) >= 2
    # exact renormalization keeps row sums within 1e-12
    t /= t.sum(axis=2, keepdims=True)
    p0 /= p0.sum(axis=1, keepdims=True)
    t[~fitted] = 1.0 / 3
    p0[~fitted] = 1.0 / 3
    return MonthlyMarkovModel(t, p0, fitted, alpha)


def _cumulative(p: np.ndarray) -> list:
    """Cumulative rows, pinned to 1.0 from each row's last nonzero entry on so
    that a zero-probability state is never drawn through rounding."""
    p = np.asarray(p, dtype=np.float64)
    cum = np.cumsum(p, axis=-1)
    last = 2 - np.argmax((p > 0)[..., ::-1], axis=-1)
    cols = np.arange(3)
    cum = np.where(cols >= last[..., None], 1.0, cum)
    return cum.tolist()


def _draw(cum_row, u: float) -> int:
    if u < cum_row[0]:
        return 0
    return 1 if u < cum_row[1] else 2


def simulate_states(
    model: MonthlyMarkovModel, start_date: dt.date, n_days: int, rng: np.random.Generator
) -> np.ndarray:
    """Simulate over a calendar span; each day uses its own month's matrix."""
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    _, months, _ = calendar_index(start_date, n_days)
    for m in np.unique(months).tolist():
        model.check_month(int(m))
    cum_t = _cumulative(model.transitions)
    u = rng.random(n_days).tolist()
    m_list = (months - 1).tolist()
    out = np.empty(n_days, dtype=np.int8)
    s = _draw(_cumulative(model.initial[m_list[0]]), u[0])
    out[0] = s
    for i in range(1, n_days):
        s = _draw(cum_t[m_list[i]][s], u[i])
        out[i] = s
    return out


def simulate_occurrence(
    model: MonthlyMarkovModel,
    month: int,
    n_days: int,
    rng: np.random.Generator,
    start_date: dt.date | None = None,
) -> StateSequence:
    """Simulate ``n_days`` states from a single month's chain.

    The first state is drawn from the month's initial distribution and
    every later one from the row of its predecessor. ``start_date`` only
    labels the result (default: the 1st of ``month`` in 2001).
    """
    model.check_month(month)
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    cum_t = _cumulative(model.transitions[month - 1])
    u = rng.random(n_days).tolist()
    out = np.empty(n_days, dtype=np.int8)
    s = _draw(_cumulative(model.initial[month - 1]), u[0])
    out[0] = s
    for i in range(1, n_days):
        s = _draw(cum_t[s], u[i])
        out[i] = s
    return StateSequence(start_date or dt.date(2001, month, 1), out)


def empirical_transitions(states: np.ndarray) -> np.ndarray:
    """Unsmoothed row-normalized transition frequencies of one sequence."""
    s = np.asarray(states, dtype=np.intp)
    counts = np.zeros((3, 3))
    np.add.at(counts, (s[:-1], s[1:]), 1)
    rows = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, rows, out=np.zeros_like(counts), where=rows > 0)

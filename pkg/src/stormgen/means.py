"""Seasonal mean forecasts: climatology, annual AR model and tercile targets."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .ingest import annual_totals
from .timeseries import DailySeries, days_in_month, empirical_quantile

logger = logging.getLogger(__name__)

TercileCategory = Literal["below", "near", "above"]
ForecastSource = Literal["climatology", "ar_model", "tercile_category"]


@dataclass(frozen=True)
class ClimatologyModel:
    """Seasonal averages of a daily record.

    Monthly figures are in mm/day, annual figures in mm/year. ``terciles``
    are the type-7 1/3 and 2/3 quantiles of the annual totals, which are
    kept for tercile conditioning.
    """

    monthly_mean: tuple[float, ...]
    monthly_sd: tuple[float, ...]
    annual_mean: float
    annual_sd: float
    terciles: tuple[float, float]
    annual_totals: tuple[tuple[int, float], ...]
    degenerate: bool = False

    def __post_init__(self):
        if len(self.monthly_mean) != 12 or len(self.monthly_sd) != 12:
            raise ValueError("climatology needs 12 monthly values")
        if min(self.monthly_sd) < 0 or self.annual_sd < 0:
            raise ValueError("standard deviations must be >= 0")
        if min(self.monthly_mean) < 0:
            raise ValueError("monthly means must be >= 0")
        if self.terciles[0] > self.terciles[1]:
            raise ValueError("tercile bounds out of order")


@dataclass(frozen=True)
class AnnualARModel:
    """AR(p) model on annual totals, optionally on first differences.

    ``coefficients[i]`` multiplies the value lagged ``i + 1`` years. With
    ``differencing == 1`` the model describes year-on-year changes.
    """

    order: int
    coefficients: tuple[float, ...]
    intercept: float
    innovation_sd: float
    differencing: int = 0
    rmse: float = 0.0
    intercept_only: bool = False

    def __post_init__(self):
        if self.order < 1 or len(self.coefficients) != self.order:
            raise ValueError("order must be >= 1 and match the coefficient count")
        if self.differencing not in (0, 1):
            raise ValueError("differencing must be 0 or 1")
        if self.innovation_sd < 0:
            raise ValueError("innovation_sd must be >= 0")


@dataclass(frozen=True)
class MeanForecast:
    """Forecast of a period total (mm) with its standard deviation."""

    target_period: tuple[int, ...]
    mean: float
    sd: float
    source: ForecastSource
    anomalous: bool = False

    def __post_init__(self):
        if self.sd < 0:
            raise ValueError("sd must be >= 0")
        if self.mean < 0 and not self.anomalous:
            raise ValueError("negative forecast mean must be flagged anomalous")


def _sd(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.size > 1 else 0.0


def fit_climatology(series: DailySeries) -> ClimatologyModel:
    totals = annual_totals(series)
    _, months, _ = series.calendar()
    observed = series.observed
    mean, sd = [], []
    for m in range(1, 13):
        x = series.values[(months == m) & observed]
        mean.append(float(x.mean()) if x.size else 0.0)
        sd.append(_sd(x))
    t = np.array([v for _, v in totals])
    degenerate = t.size < 2
    if degenerate:
        logger.warning("climatology fitted on a single year; annual sd reported as 0")
    t1, t2 = empirical_quantile(t, [1 / 3, 2 / 3])
    return ClimatologyModel(
        monthly_mean=tuple(mean),
        monthly_sd=tuple(sd),
        annual_mean=float(t.mean()),
        annual_sd=_sd(t),
        terciles=(float(t1), float(t2)),
        annual_totals=tuple(totals),
        degenerate=degenerate,
    )


def _lag_design(x: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    y = x[p:]
    lags = np.column_stack([x[p - i - 1 : x.size - i - 1] for i in range(p)])
    return y, lags


def fit_annual_ar(totals: Sequence[tuple[int, float]], p: int = 1, d: int = 0) -> AnnualARModel:
    """Least-squares AR(p) fit on (optionally differenced) annual totals.

    The regression is solved on mean-centred lags and the intercept is
    recovered from the means, so noiseless AR data are reproduced to
    rounding error. A constant design falls back to an intercept-only model
    with a warning.
    """
    if p < 1:
        raise ValueError("order p must be >= 1")
    if d not in (0, 1):
        raise ValueError("differencing d must be 0 or 1")
    x = np.array([v for _, v in totals], dtype=np.float64)
    if x.size < p + d + 2:
        raise ValueError(f"need at least {p + d + 2} annual totals for AR({p}) with d={d}")
    if d:
        x = np.diff(x)
    y, lags = _lag_design(x, p)
    yc = y - y.mean()
    lc = lags - lags.mean(axis=0)
    scale = np.abs(lc).max() if lc.size else 0.0
    rank = np.linalg.matrix_rank(lc, tol=1e-10 * max(scale, np.abs(y).max(), 1.0)) if scale > 0 else 0
    if rank < p:
        warnings.warn("rank-deficient AR design; falling back to intercept-only model", RuntimeWarning)
        resid = y - y.mean()
        sd = float(np.sqrt(resid @ resid / (y.size - 1))) if y.size > 1 else 0.0
        return AnnualARModel(
            order=p,
            coefficients=(0.0,) * p,
            intercept=float(y.mean()),
            innovation_sd=sd,
            differencing=d,
            rmse=float(np.sqrt(np.mean(resid**2))),
            intercept_only=True,
        )
    coef, *_ = np.linalg.lstsq(lc, yc, rcond=None)
    intercept = float(y.mean() - lags.mean(axis=0) @ coef)
    resid = y - intercept - lags @ coef
    dof = y.size - p - 1
    sd = float(np.sqrt(resid @ resid / dof)) if dof > 0 else 0.0
    return AnnualARModel(
        order=p,
        coefficients=tuple(float(c) for c in coef),
        intercept=intercept,
        innovation_sd=sd,
        differencing=d,
        rmse=float(np.sqrt(np.mean(resid**2))),
    )


def _psi_weights(coefficients: Sequence[float], d: int, horizon: int) -> np.ndarray:
    # MA(infinity) weights of the level process, for the forecast variance
    phi = np.asarray(coefficients, dtype=np.float64)
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        k = min(j, phi.size)
        psi[j] = phi[:k] @ psi[j - k : j][::-1]
    return np.cumsum(psi) if d else psi


def forecast_annual(
    model: AnnualARModel, history: Sequence[tuple[int, float]], horizon: int = 1
) -> list[MeanForecast]:
    """Iterate one-step forecasts ``horizon`` years past the end of ``history``.

    The standard deviation at step h is ``innovation_sd * sqrt(sum psi_j^2)``
    over the first h MA weights. Negative means are floored at 0 and flagged
    anomalous.
    """
    if not history:
        raise ValueError("empty history")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    p, d = model.order, model.differencing
    if len(history) < p + d:
        raise ValueError(f"history needs at least {p + d} years")
    levels = [v for _, v in history]
    last_year = history[-1][0]
    work = list(np.diff(levels)) if d else list(levels)
    psi2 = np.cumsum(_psi_weights(model.coefficients, d, horizon) ** 2)
    level = levels[-1]
    out = []
    for h in range(horizon):
        nxt = model.intercept + sum(c * work[-i - 1] for i, c in enumerate(model.coefficients))
        work.append(nxt)
        level = level + nxt if d else nxt
        mean = float(level)
        anomalous = mean < 0
        out.append(
            MeanForecast(
                target_period=(last_year + h + 1,),
                mean=0.0 if anomalous else mean,
                sd=float(model.innovation_sd * math.sqrt(psi2[h])),
                source="ar_model",
                anomalous=anomalous,
            )
        )
    return out


def tercile_to_target(category: TercileCategory, clim: ClimatologyModel) -> MeanForecast:
    """Mean of the historical annual totals in the requested tercile bin.

    Bins are (-inf, t1], (t1, t2] and (t2, inf). An empty bin falls back to
    its nearest bound (t1, the t1-t2 midpoint, or t2).
    """
    t1, t2 = clim.terciles
    x = np.array([v for _, v in clim.annual_totals])
    if category == "below":
        sel, fallback = x <= t1, t1
    elif category == "near":
        sel, fallback = (x > t1) & (x <= t2), 0.5 * (t1 + t2)
    elif category == "above":
        sel, fallback = x > t2, t2
    else:
        raise ValueError(f"unknown tercile category {category!r}")
    chosen = x[sel]
    mean = float(chosen.mean()) if chosen.size else float(fallback)
    return MeanForecast(target_period=(), mean=mean, sd=_sd(chosen), source="tercile_category")


def monthly_share(clim: ClimatologyModel, month: int, year: Optional[int] = None) -> float:
    """Fraction of the climatological annual total falling in ``month``."""
    ref = year if year is not None else 2001
    month_totals = [clim.monthly_mean[m - 1] * days_in_month(ref, m) for m in range(1, 13)]
    total = sum(month_totals)
    if total <= 0:
        raise ValueError("climatology has no precipitation")
    return month_totals[month - 1] / total


def to_period_target(
    forecast: MeanForecast,
    clim: ClimatologyModel,
    month: Optional[int],
    year: Optional[int] = None,
) -> MeanForecast:
    """Scale an annual forecast down to a single month by climatological share.

    With ``month`` None the forecast already describes the target period and
    is returned unchanged.
    """
    if month is None:
        return forecast
    share = monthly_share(clim, month, year)
    period = (year, month) if year is not None else (month,)
    return MeanForecast(period, forecast.mean * share, forecast.sd * share, forecast.source, forecast.anomalous)


def climatology_target(clim: ClimatologyModel, month: Optional[int], year: Optional[int] = None) -> MeanForecast:
    """Climatological total for a month, or for a year when ``month`` is None."""
    if month is None:
        return MeanForecast((year,) if year else (), clim.annual_mean, clim.annual_sd, "climatology")
    n = days_in_month(year if year is not None else 2001, month)
    period = (year, month) if year is not None else (month,)
    return MeanForecast(period, clim.monthly_mean[month - 1] * n, clim.monthly_sd[month - 1] * math.sqrt(n), "climatology")

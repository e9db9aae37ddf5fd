import datetime as dt
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from stormgen.means import (
    AnnualARModel,
    ClimatologyModel,
    climatology_target,
    fit_annual_ar,
    fit_climatology,
    forecast_annual,
    monthly_share,
    tercile_to_target,
    to_period_target,
)
from stormgen.timeseries import DailySeries


def clim_from_totals(totals):
    t = np.asarray(totals, dtype=float)
    from stormgen.timeseries import empirical_quantile

    t1, t2 = empirical_quantile(t, [1 / 3, 2 / 3])
    return ClimatologyModel(
        monthly_mean=(1.0,) * 12,
        monthly_sd=(0.0,) * 12,
        annual_mean=float(t.mean()),
        annual_sd=float(t.std(ddof=1)) if t.size > 1 else 0.0,
        terciles=(float(t1), float(t2)),
        annual_totals=tuple((2000 + i, float(v)) for i, v in enumerate(t)),
    )


def test_climatology_constant():
    start = dt.date(1990, 1, 1)
    n = (dt.date(1993, 1, 1) - start).days
    c = fit_climatology(DailySeries(start, np.full(n, 2.0)))
    assert c.monthly_mean == pytest.approx((2.0,) * 12)
    assert all(sd == 0.0 for sd in c.monthly_sd)
    # 1990, 1991 and 1992 (leap)
    assert c.annual_mean == pytest.approx((730 + 730 + 732) / 3)
    assert c.annual_sd == pytest.approx(np.std([730, 730, 732], ddof=1))


def test_climatology_terciles():
    # three years whose totals are 300, 600 and 900
    values = np.concatenate([np.full(365, v / 365) for v in (300, 600, 900)])
    c = fit_climatology(DailySeries("2001-01-01", values))
    assert c.terciles == pytest.approx((500.0, 700.0))


def test_climatology_single_year_degenerate():
    c = fit_climatology(DailySeries("2001-01-01", np.ones(365)))
    assert c.degenerate and c.annual_sd == 0.0


def test_climatology_needs_complete_year():
    with pytest.raises(ValueError):
        fit_climatology(DailySeries("2001-02-01", np.ones(100)))


def ar1_sequence(x0, coef, intercept, n):
    x = [x0]
    for _ in range(n - 1):
        x.append(coef * x[-1] + intercept)
    return [(1990 + i, v) for i, v in enumerate(x)]


def test_ar1_noiseless_recovery():
    m = fit_annual_ar(ar1_sequence(50.0, 0.5, 100.0, 20), p=1)
    assert abs(m.coefficients[0] - 0.5) < 1e-9
    assert abs(m.intercept - 100.0) < 1e-9
    assert m.innovation_sd < 1e-9


def test_ar2_noiseless_recovery():
    x = [100.0, 300.0]
    for _ in range(30):
        x.append(0.3 * x[-1] - 0.2 * x[-2] + 250.0)
    m = fit_annual_ar([(1950 + i, v) for i, v in enumerate(x)], p=2)
    assert np.allclose(m.coefficients, [0.3, -0.2], atol=1e-9, rtol=0)
    assert abs(m.intercept - 250.0) < 1e-7


def test_constant_totals_fall_back():
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        m = fit_annual_ar([(2000 + i, 500.0) for i in range(10)], p=1)
    assert m.intercept_only and any("intercept-only" in str(w.message) for w in caught)
    assert [f.mean for f in forecast_annual(m, [(2009, 500.0)], 3)] == [500.0] * 3


def test_white_noise():
    rng = np.random.default_rng(4)
    n = 400
    x = 800 + 120 * rng.standard_normal(n)
    m = fit_annual_ar([(1600 + i, float(v)) for i, v in enumerate(x)], p=1)
    assert abs(m.coefficients[0]) < 3 / math.sqrt(n)
    assert m.innovation_sd == pytest.approx(np.std(x, ddof=1), rel=3 / math.sqrt(n))


def test_too_short():
    with pytest.raises(ValueError):
        fit_annual_ar([(2000, 1.0), (2001, 2.0)], p=1)


def test_forecast_examples():
    m = AnnualARModel(order=1, coefficients=(0.5,), intercept=100.0, innovation_sd=10.0)
    f = forecast_annual(m, [(2019, 400.0)], 2)
    assert [x.mean for x in f] == [300.0, 250.0]
    assert [x.target_period for x in f] == [(2020,), (2021,)]
    # psi weights 1, 0.5: sd grows to 10 * sqrt(1.25)
    assert f[0].sd == pytest.approx(10.0)
    assert f[1].sd == pytest.approx(10.0 * math.sqrt(1.25))


def test_forecast_converges_to_mean():
    m = AnnualARModel(order=1, coefficients=(0.7,), intercept=60.0, innovation_sd=1.0)
    f = forecast_annual(m, [(2000, 900.0)], 200)[-1]
    assert abs(f.mean - 60.0 / 0.3) < 1e-6


def test_forecast_differenced():
    m = AnnualARModel(order=1, coefficients=(0.5,), intercept=10.0, innovation_sd=1.0, differencing=1)
    f = forecast_annual(m, [(2000, 100.0), (2001, 120.0)], 2)
    # diffs: 20 -> 20, then 20; levels 140, 160
    assert [x.mean for x in f] == [140.0, 160.0]


def test_forecast_negative_flagged():
    m = AnnualARModel(order=1, coefficients=(0.5,), intercept=-400.0, innovation_sd=1.0)
    f = forecast_annual(m, [(2000, 100.0)], 1)[0]
    assert f.anomalous and f.mean == 0.0


def test_forecast_empty_history():
    m = AnnualARModel(order=1, coefficients=(0.5,), intercept=1.0, innovation_sd=1.0)
    with pytest.raises(ValueError):
        forecast_annual(m, [], 1)


def test_tercile_examples():
    c = clim_from_totals([300, 600, 900])
    assert tercile_to_target("near", c).mean == 600.0
    assert tercile_to_target("below", c).mean == 300.0
    assert tercile_to_target("above", c).mean == 900.0
    assert tercile_to_target("near", c).source == "tercile_category"


def test_tercile_all_equal():
    c = clim_from_totals([450.0] * 5)
    assert {tercile_to_target(k, c).mean for k in ("below", "near", "above")} == {450.0}


@given(st.lists(st.floats(1, 5000, allow_nan=False), min_size=3, max_size=40).filter(lambda v: len(set(v)) >= 3))
def test_tercile_order(totals):
    c = clim_from_totals(totals)
    b, n, a = (tercile_to_target(k, c).mean for k in ("below", "near", "above"))
    assert b <= n <= a


def test_monthly_targets():
    c = ClimatologyModel((2.0,) * 12, (0.5,) * 12, 730.0, 10.0, (700.0, 760.0), ((2001, 730.0),))
    assert monthly_share(c, 1) == pytest.approx(31 / 365)
    jan = climatology_target(c, 1)
    assert jan.mean == pytest.approx(62.0) and jan.source == "climatology"
    annual = climatology_target(c, None)
    assert annual.mean == 730.0
    scaled = to_period_target(annual, c, 2, 2001)
    assert scaled.mean == pytest.approx(730.0 * 28 / 365)

import datetime as dt
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from epipanel.regress import (
    LN2,
    DegenerateFitError,
    IndeterminateGrowthError,
    change_point,
    half_life_from_slope,
    ols_fit,
    prediction_band,
    segment_rss,
    slope_ratio,
    to_half_life,
)


def normal_equations(t, y):
    X = np.column_stack([np.ones_like(t), t])
    return np.linalg.solve(X.T @ X, X.T @ y)


def random_instance(rng):
    n = int(rng.integers(3, 120))
    t = np.sort(rng.choice(np.arange(200), n, replace=False)).astype(float)
    y = rng.normal(0, 1) + rng.normal(0, 0.05) * t + rng.normal(0, rng.uniform(0.01, 1), n)
    return t, y


def test_ols_matches_normal_equations_1000_instances():
    rng = np.random.default_rng(12345)
    worst = 0.0
    for _ in range(1000):
        t, y = random_instance(rng)
        fit = ols_fit(t, y)
        b0, b1 = normal_equations(t, y)
        worst = max(worst, abs(fit.slope - b1), abs(fit.intercept - b0))
    assert worst < 1e-10


def test_ci_matches_scipy_linregress():
    rng = np.random.default_rng(3)
    for _ in range(50):
        t, y = random_instance(rng)
        fit = ols_fit(t, y)
        ref = sps.linregress(t, y)
        half = sps.t.ppf(0.975, t.size - 2) * ref.stderr
        assert fit.slope == pytest.approx(ref.slope, abs=1e-12)
        assert fit.slope_ci_95[0] == pytest.approx(ref.slope - half, rel=1e-9, abs=1e-12)
        assert fit.slope_ci_95[1] == pytest.approx(ref.slope + half, rel=1e-9, abs=1e-12)


def test_exact_line_and_degenerate_inputs():
    t = np.arange(10.0)
    fit = ols_fit(t, 2.0 - 0.3 * t)
    assert fit.slope == pytest.approx(-0.3, abs=1e-14)
    assert fit.intercept == pytest.approx(2.0, abs=1e-13)
    assert fit.rss == pytest.approx(0.0, abs=1e-20)
    with pytest.raises(DegenerateFitError):
        ols_fit([1.0, 2.0], [1.0, 2.0])
    with pytest.raises(DegenerateFitError):
        ols_fit([3.0, 3.0, 3.0], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        ols_fit([1.0, 2.0, np.nan], [1.0, 2.0, 3.0])


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.floats(-100, 100),
    st.floats(-50, 50),
)
def test_ols_invariances(seed, shift_y, shift_t):
    rng = np.random.default_rng(seed)
    t, y = random_instance(rng)
    base = ols_fit(t, y)
    # Adding a constant to y moves only the intercept.
    moved = ols_fit(t, y + shift_y)
    assert moved.slope == pytest.approx(base.slope, abs=1e-9)
    assert moved.slope_ci_95[1] - moved.slope_ci_95[0] == pytest.approx(
        base.slope_ci_95[1] - base.slope_ci_95[0], rel=1e-7
    )
    # Re-origining time leaves slope and interval unchanged.
    shifted = ols_fit(t + shift_t, y)
    assert shifted.slope == pytest.approx(base.slope, abs=1e-9)
    assert shifted.residual_variance == pytest.approx(base.residual_variance, rel=1e-7, abs=1e-12)
    # Order of observations does not matter.
    perm = rng.permutation(t.size)
    assert ols_fit(t[perm], y[perm]).slope == pytest.approx(base.slope, abs=1e-12)


def test_prediction_band_formula_and_shape():
    rng = np.random.default_rng(9)
    t = np.arange(20.0)
    y = 1 - 0.1 * t + rng.normal(0, 0.2, 20)
    fit = ols_fit(t, y)
    lo, hi = prediction_band(fit, t)
    tc = sps.t.ppf(0.975, 18)
    expect = tc * np.sqrt(fit.residual_variance * (1 + 1 / 20 + (t - t.mean()) ** 2 / fit.sxx))
    assert np.allclose((hi - lo) / 2, expect, rtol=1e-10)
    # Narrowest at the mean of t.
    assert np.argmin(hi - lo) in (9, 10)
    lo99, hi99 = fit.prediction_band(t, level=0.99)
    assert np.all(hi99 - lo99 > hi - lo)


def test_prediction_band_monte_carlo_coverage():
    rng = np.random.default_rng(20200415)
    n, trials = 15, 10_000
    t = np.arange(n, dtype=float)
    hits = 0
    for _ in range(trials):
        y = 0.3 - 0.05 * t + rng.normal(0, 0.25, n)
        fit = ols_fit(t, y)
        t0 = rng.uniform(-3, n + 3)
        y0 = 0.3 - 0.05 * t0 + rng.normal(0, 0.25)
        lo, hi = prediction_band(fit, t0)
        hits += bool(lo <= y0 <= hi)
    assert abs(hits / trials - 0.95) <= 0.01


def test_slope_interval_monte_carlo_coverage():
    rng = np.random.default_rng(7)
    t = np.arange(12, dtype=float)
    trials = 4000
    hits = 0
    for _ in range(trials):
        fit = ols_fit(t, -0.05 * t + rng.normal(0, 0.3, t.size))
        lo, hi = fit.slope_ci_95
        hits += lo <= -0.05 <= hi
    assert hits / trials >= 0.93


# -- half-lives ---------------------------------------------------------------


def test_half_life_of_minus_ln2_is_one_day():
    hl = half_life_from_slope(-LN2, (-LN2 * 1.1, -LN2 * 0.9))
    assert hl.value == 1.0
    assert hl.kind == "half_life"


def test_half_life_reported_regional_example():
    # Slope -0.047 with CI (-0.051, -0.043); the reported half-life 14.829
    # comes from the unrounded slope.
    hl = half_life_from_slope(-0.047, (-0.051, -0.043))
    assert hl.value == pytest.approx(math.log(2) / 0.047, rel=1e-15)
    assert hl.value == pytest.approx(14.748, abs=5e-4)
    assert hl.ci_95 == pytest.approx((13.591, 16.120), abs=5e-4)
    assert abs(hl.value - 14.829) / 14.829 < 0.02


def test_doubling_time_for_positive_slope():
    hl = half_life_from_slope(0.022, (0.016, 0.030))
    assert hl.kind == "doubling_time"
    assert hl.value == pytest.approx(31.506, abs=1e-3)
    assert hl.ci_95 == pytest.approx((23.105, 43.322), abs=1e-3)


def test_indeterminate_growth():
    with pytest.raises(IndeterminateGrowthError) as e:
        half_life_from_slope(-0.01, (-0.03, 0.01))
    assert e.value.slope_ci == (-0.03, 0.01)
    with pytest.raises(IndeterminateGrowthError):
        half_life_from_slope(0.0, (0.0, 0.0))


@settings(max_examples=300)
@given(st.floats(1e-4, 2.0), st.floats(0.01, 0.9), st.booleans())
def test_half_life_interval_brackets_estimate(a, rel, negative):
    s = -1 if negative else 1
    slope = s * a
    hl = half_life_from_slope(slope, (slope - rel * a, slope + rel * a))
    assert hl.ci_95[0] <= hl.value <= hl.ci_95[1]
    assert hl.value * a == pytest.approx(LN2, rel=1e-14)


def test_slope_ratio_reported_example():
    t = np.arange(30.0)
    f = ols_fit(t, -0.05595 * t)
    r = ols_fit(t, -0.03 * t)
    sr = slope_ratio(f, r)
    assert sr.ratio == pytest.approx(1.865, abs=1e-9)
    assert sr.half_life_ratio == pytest.approx(0.536, abs=5e-4)


@settings(max_examples=300)
@given(
    st.floats(-1, 1).filter(lambda v: abs(v) > 1e-9),
    st.floats(-1, 1).filter(lambda v: abs(v) > 1e-9),
)
def test_half_life_ratio_times_slope_ratio_is_one(a_f, a_raw):
    t = np.arange(5.0)
    sr = slope_ratio(ols_fit(t, a_f * t), ols_fit(t, a_raw * t))
    rho, eta = sr.exact
    assert rho * eta == Fraction(1)
    assert sr.ratio * sr.half_life_ratio == pytest.approx(1.0, abs=1e-15)


def test_slope_ratio_zero_slope():
    t = np.arange(5.0)
    with pytest.raises(ZeroDivisionError):
        slope_ratio(ols_fit(t, -0.1 * t), ols_fit(t, np.ones(5)))


def test_to_half_life_uses_fit_interval():
    t = np.arange(40.0)
    rng = np.random.default_rng(0)
    fit = ols_fit(t, -0.06 * t + rng.normal(0, 0.05, 40))
    hl = to_half_life(fit)
    assert hl.value == pytest.approx(LN2 / -fit.slope)
    assert hl.ci_95 == pytest.approx(sorted((LN2 / -fit.slope_ci_95[0], LN2 / -fit.slope_ci_95[1])))


# -- change point -------------------------------------------------------------


def brute_force_rss(t, y, k):
    return ols_fit(t[:k], y[:k]).rss + ols_fit(t[k:], y[k:]).rss


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(11, 60))
def test_segment_rss_matches_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    y = rng.normal(0, 1, n).cumsum() * 0.1
    fast = segment_rss(t, y)
    for k in range(3, n - 2):
        assert fast[k] == pytest.approx(brute_force_rss(t, y, k), rel=1e-8, abs=1e-9)
    cp = change_point(t, y, 5)
    best = min(range(5, n - 4), key=lambda k: brute_force_rss(t, y, k))
    assert brute_force_rss(t, y, cp.break_index) == pytest.approx(brute_force_rss(t, y, best), rel=1e-9, abs=1e-12)


def test_change_point_recovers_kink_within_two_days():
    # Continuous kink: slope +0.10/day, then -0.05/day; noise sd 0.05; 60 days.
    rng = np.random.default_rng(2020)
    n, hits, trials = 60, 0, 500
    t = np.arange(n, dtype=float)
    for _ in range(trials):
        b = int(rng.integers(15, n - 15))
        y = np.where(t < b, 0.10 * (t - b), -0.05 * (t - b)) + rng.normal(0, 0.05, n)
        hits += abs(change_point(t, y, 5).break_index - b) <= 2
    assert hits / trials >= 0.95


def test_change_point_step_function_exact():
    t = np.arange(30.0)
    y = np.where(t < 17, 1.0, -2.0)
    cp = change_point(t, y, 5)
    assert cp.break_index == 17
    assert cp.total_rss == pytest.approx(0.0, abs=1e-20)


def test_change_point_straight_line_ties_break_earliest():
    t = np.arange(25.0)
    cp = change_point(t, 0.5 - 0.1 * t, 5)
    assert cp.break_index == 5
    assert cp.left.slope == pytest.approx(-0.1)
    assert cp.right.slope == pytest.approx(-0.1)


def test_change_point_dates_and_preconditions():
    t = np.arange(20.0)
    dates = np.datetime64("2020-03-01") + np.arange(20)
    cp = change_point(t, np.where(t < 9, t, 18 - t), 5, dates=dates)
    assert cp.break_date == dt.date(2020, 3, 10)
    cp2 = change_point(t, np.where(t < 9, t, 18 - t), 5, time_origin=dt.date(2020, 3, 1))
    assert cp2.break_date == cp.break_date
    with pytest.raises(DegenerateFitError):
        change_point(np.arange(10.0), np.zeros(10), 5)
    with pytest.raises(ValueError):
        change_point(np.arange(20.0)[::-1], np.zeros(20), 5)
    with pytest.raises(ValueError):
        change_point(t, t, 2)

"""Log-linear trend fitting.

A series ``p(t) = b * exp(a * t)`` becomes a straight line after taking
logs, so every fit here is a simple least-squares line of log-values on
days. The slope converts to a half-life (a < 0) or doubling time (a > 0)
as ``ln 2 / |a|``.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .stats import t_critical

LN2 = math.log(2.0)


class DegenerateFitError(ValueError):
    pass


class IndeterminateGrowthError(ValueError):
    """The slope interval straddles zero, so no half-life can be reported."""

    def __init__(self, slope: float, slope_ci: tuple[float, float]):
        self.slope = slope
        self.slope_ci = slope_ci
        super().__init__(
            f"indeterminate growth direction: slope {slope:.4g} "
            f"with 95% CI ({slope_ci[0]:.4g}, {slope_ci[1]:.4g})"
        )


@dataclass(frozen=True)
class RegressionFit:
    """Least-squares line ``y = slope * t + intercept``.

    ``t`` is in days since ``time_origin``; ``y`` in natural-log units.
    """

    slope: float
    intercept: float
    n: int
    slope_ci_95: tuple[float, float]
    residual_variance: float
    sxx: float
    t_mean: float
    rss: float
    t_crit: float
    time_origin: dt.date | None = None

    @property
    def df(self) -> int:
        return self.n - 2

    @property
    def slope_se(self) -> float:
        return math.sqrt(self.residual_variance / self.sxx)

    def predict(self, t):
        return self.slope * np.asarray(t, dtype=np.float64) + self.intercept

    def prediction_band(self, t, level: float = 0.95):
        return prediction_band(self, t, level)


def ols_fit(t: Sequence[float], y: Sequence[float], *, time_origin: dt.date | None = None) -> RegressionFit:
    """Ordinary least squares of ``y`` on ``t`` with a 95% slope interval.

    The interval is the classical t-interval on n - 2 degrees of freedom.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("t and y must be 1-d and the same length")
    n = t.size
    if n < 3:
        raise DegenerateFitError(f"need at least 3 points, got {n}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite input")
    t_mean = float(t.mean())
    y_mean = float(y.mean())
    dt_ = t - t_mean
    sxx = float(dt_ @ dt_)
    if sxx <= 0.0:
        raise DegenerateFitError("all t values are equal")
    slope = float(dt_ @ (y - y_mean)) / sxx
    intercept = y_mean - slope * t_mean
    resid = y - (slope * t + intercept)
    rss = float(resid @ resid)
    s2 = rss / (n - 2)
    tc = t_critical(0.95, n - 2)
    half = tc * math.sqrt(s2 / sxx)
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        n=n,
        slope_ci_95=(slope - half, slope + half),
        residual_variance=s2,
        sxx=sxx,
        t_mean=t_mean,
        rss=rss,
        t_crit=tc,
        time_origin=time_origin,
    )


def prediction_band(fit: RegressionFit, t, level: float = 0.95):
    """Interval expected to hold a new observation at ``t`` with prob. ``level``."""
    t = np.asarray(t, dtype=np.float64)
    tc = fit.t_crit if level == 0.95 else t_critical(level, fit.df)
    yhat = fit.predict(t)
    half = tc * np.sqrt(fit.residual_variance * (1.0 + 1.0 / fit.n + (t - fit.t_mean) ** 2 / fit.sxx))
    return yhat - half, yhat + half


# -- half-lives ---------------------------------------------------------------


@dataclass(frozen=True)
class HalfLife:
    value: float
    ci_95: tuple[float, float]
    kind: str  # "half_life" | "doubling_time"


def half_life_from_slope(slope: float, slope_ci: tuple[float, float]) -> HalfLife:
    lo, hi = sorted(slope_ci)
    if slope == 0 or lo <= 0.0 <= hi:
        raise IndeterminateGrowthError(slope, (lo, hi))
    kind = "half_life" if slope < 0 else "doubling_time"
    ends = sorted((LN2 / abs(lo), LN2 / abs(hi)))
    return HalfLife(LN2 / abs(slope), (ends[0], ends[1]), kind)


def to_half_life(fit: RegressionFit) -> HalfLife:
    return half_life_from_slope(fit.slope, fit.slope_ci_95)


@dataclass(frozen=True)
class SlopeRatio:
    fraction_slope: float
    raw_slope: float

    @property
    def ratio(self) -> float:
        return self.fraction_slope / self.raw_slope

    @property
    def half_life_ratio(self) -> float:
        return self.raw_slope / self.fraction_slope

    @property
    def exact(self) -> tuple[Fraction, Fraction]:
        """Both ratios as exact rationals of the two stored slopes."""
        f, r = Fraction(self.fraction_slope), Fraction(self.raw_slope)
        return f / r, r / f


def slope_ratio(fit_fraction: RegressionFit, fit_raw: RegressionFit) -> SlopeRatio:
    """Ratio a_f / a_raw of the positive-fraction slope to the raw-count slope.

    The half-life ratio is its reciprocal, since half-lives scale as 1/|a|.
    """
    if fit_raw.slope == 0:
        raise ZeroDivisionError("raw slope is zero")
    if fit_fraction.slope == 0:
        raise ZeroDivisionError("fraction slope is zero")
    return SlopeRatio(fit_fraction.slope, fit_raw.slope)


# -- change point -------------------------------------------------------------


@dataclass(frozen=True)
class ChangePointFit:
    break_index: int  # first point of the right segment
    break_t: float
    left: RegressionFit
    right: RegressionFit
    total_rss: float
    break_date: dt.date | None = None


def segment_rss(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """RSS of the two-line fit for every split index k (left = [:k]).

    Entry k is ``rss(left) + rss(right)``; entries where either side has
    fewer than 2 points are inf.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = t.size
    tc = t - t.mean()
    yc = y - y.mean()

    def prefix(v):
        return np.concatenate(([0.0], np.cumsum(v)))

    S1, St, Sy = prefix(np.ones(n)), prefix(tc), prefix(yc)
    Stt, Syy, Sty = prefix(tc * tc), prefix(yc * yc), prefix(tc * yc)

    def rss(cnt, st, sy, stt, syy, sty):
        with np.errstate(divide="ignore", invalid="ignore"):
            sxx = stt - st * st / cnt
            syy_c = syy - sy * sy / cnt
            sxy = sty - st * sy / cnt
            r = syy_c - np.where(sxx > 0, sxy * sxy / sxx, 0.0)
        return np.maximum(r, 0.0)

    k = np.arange(n + 1)
    left = rss(S1[k], St[k], Sy[k], Stt[k], Syy[k], Sty[k])
    right = rss(
        S1[n] - S1[k], St[n] - St[k], Sy[n] - Sy[k], Stt[n] - Stt[k], Syy[n] - Syy[k], Sty[n] - Sty[k]
    )
    out = left + right
    out[(k < 2) | (n - k < 2)] = np.inf
    return out


def change_point(
    t: Sequence[float],
    y: Sequence[float],
    min_segment: int = 5,
    *,
    dates: Sequence | None = None,
    time_origin: dt.date | None = None,
) -> ChangePointFit:
    """Best split of the series into two independently fitted lines.

    Every break leaving at least ``min_segment`` points on each side is
    tried; the one with the smallest summed RSS wins, earliest on ties.
    """
    t = np.asarray(t, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = t.size
    if min_segment < 3:
        raise ValueError("min_segment must be at least 3")
    if n < 2 * min_segment + 1:
        raise DegenerateFitError(f"need at least {2 * min_segment + 1} points, got {n}")
    order = np.argsort(t, kind="stable")
    if not np.array_equal(order, np.arange(n)):
        raise ValueError("t must be sorted")
    cand = np.arange(min_segment, n - min_segment + 1)
    rss = segment_rss(t, y)[cand]
    best = float(rss.min())
    scale = float(np.sum((y - y.mean()) ** 2))
    tie = 1e-12 * max(scale, 1.0)
    k = int(cand[np.flatnonzero(rss <= best + tie)[0]])
    left = ols_fit(t[:k], y[:k], time_origin=time_origin)
    right = ols_fit(t[k:], y[k:], time_origin=time_origin)
    bdate = None
    if dates is not None:
        bdate = np.datetime64(dates[k], "D").astype(dt.date)
    elif time_origin is not None:
        bdate = time_origin + dt.timedelta(days=float(t[k]))
    return ChangePointFit(k, float(t[k]), left, right, left.rss + right.rss, bdate)

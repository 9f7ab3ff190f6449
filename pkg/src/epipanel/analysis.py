"""Per-region regression suite.

For every region four log-linear trends are fitted over the regression
window: the daily positive fraction, raw daily confirmed, daily tests and
the cumulative positive fraction. The slope ratio between the first two
and a change point of the daily fraction are reported alongside.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .core import EpiPanel, to_date
from .quality import (
    FirstDeath,
    QualityReport,
    StartDateError,
    apply_exclusions,
    detect_anomalies,
    regression_start,
)
from .regions import RegionId
from .regress import (
    ChangePointFit,
    DegenerateFitError,
    HalfLife,
    IndeterminateGrowthError,
    RegressionFit,
    SlopeRatio,
    change_point,
    ols_fit,
    slope_ratio,
    to_half_life,
)

SERIES_KINDS = ("daily_fraction", "daily_confirmed", "daily_tests", "cumulative_fraction")
FIT_COLUMNS = ("region", "series_kind", "a", "a_lo", "a_hi", "n", "half_life", "hl_lo", "hl_hi", "kind")

_DESCRIPTION = {
    "daily_fraction": "log(daily confirmed) - log(daily tested) ~ time",
    "daily_confirmed": "log(daily confirmed) ~ time",
    "daily_tests": "log(daily tests) ~ time",
    "cumulative_fraction": "log(cumulative confirmed) - log(cumulative tested) ~ time",
}


@dataclass(frozen=True, eq=False)
class SeriesFit:
    series_kind: str
    dates: np.ndarray
    t: np.ndarray
    y: np.ndarray
    fit: RegressionFit
    half_life: HalfLife | None
    note: str = ""


@dataclass(eq=False)
class RegionAnalysis:
    region: RegionId
    report: QualityReport
    fits: dict[str, SeriesFit] = field(default_factory=dict)
    ratio: SlopeRatio | None = None
    change: ChangePointFit | None = None
    skipped: str | None = None
    # Full daily-fraction series from the first death, for charts.
    fraction_dates: np.ndarray | None = None
    fraction_values: np.ndarray | None = None

    @property
    def start_date(self) -> dt.date | None:
        return self.report.start_date


def _series(panel: EpiPanel, view, kind: str):
    if kind == "cumulative_fraction":
        return view.dates, view.cumulative("confirmed_cum"), view.cumulative("tests_cum")
    conf = view.daily("confirmed_cum")
    tests = view.daily("tests_cum")
    if kind == "daily_fraction":
        return view.dates, conf, tests
    if kind == "daily_confirmed":
        return view.dates, conf, None
    return view.dates, tests, None


def regression_points(panel: EpiPanel, view, kind: str, start: dt.date, report: QualityReport):
    """(dates, t, y) for one series from ``start``; undefined logs are dropped
    and logged in ``report``."""
    dates, num, den = _series(panel, view, kind)
    in_window = dates >= np.datetime64(start, "D")
    ok = num > 0 if den is None else (num > 0) & (den > 0)
    for i in np.flatnonzero(in_window & ~ok):
        report.record(to_date(dates[i]), kind, "non-positive count, log undefined")
    keep = in_window & ok
    d = dates[keep]
    y = np.log(num[keep].astype(np.float64))
    if den is not None:
        y = y - np.log(den[keep].astype(np.float64))
    t = (d - np.datetime64(start, "D")).astype(np.float64)
    return d, t, y


def daily_fraction_series(panel: EpiPanel, view, report: QualityReport | None = None):
    """Log daily positive fraction from the first death on."""
    first = regression_start(panel, FirstDeath())
    rep = report if report is not None else QualityReport(panel.region)
    d, t, y = regression_points(panel, view, "daily_fraction", first, rep)
    return d, y


def analyze_region(panel: EpiPanel, config: RunConfig) -> RegionAnalysis:
    region = panel.region
    report = QualityReport(region, flags=detect_anomalies(panel))
    result = RegionAnalysis(region, report)
    if region in config.ineligible:
        result.skipped = f"regression_ineligible: {config.ineligible[region]}"
        report.notes.append(f"skipped ({result.skipped})")
        return result
    if panel.tests_cum is None:
        result.skipped = "no test counts"
        return result

    rules = config.rules_for(region)
    daily_view, _ = apply_exclusions(panel, rules, config.auto_drop_zero_tests, "daily_regression", report)
    # Cumulative totals stay intact; only rules meant for every curve apply.
    cum_view, _ = apply_exclusions(panel, rules, False, "all_curves", report)

    try:
        fd, fy = daily_fraction_series(panel, daily_view, QualityReport(region))
    except StartDateError as e:
        result.skipped = str(e)
        report.notes.append(result.skipped)
        return result
    result.fraction_dates, result.fraction_values = fd, fy
    ms = config.change_point_min_segment
    if len(fd) >= 2 * ms + 1:
        t0 = to_date(fd[0])
        result.change = change_point((fd - fd[0]).astype(np.float64), fy, ms, dates=fd, time_origin=t0)

    policy = config.policy_for(region)
    try:
        start = regression_start(panel, policy, report, view=daily_view)
    except StartDateError as e:
        result.skipped = str(e)
        report.notes.append(result.skipped)
        return result

    for kind in SERIES_KINDS:
        view = cum_view if kind == "cumulative_fraction" else daily_view
        d, t, y = regression_points(panel, view, kind, start, report)
        try:
            fit = ols_fit(t, y, time_origin=start)
        except DegenerateFitError as e:
            report.notes.append(f"{kind}: no fit ({e})")
            continue
        note = ""
        try:
            hl = to_half_life(fit)
        except IndeterminateGrowthError as e:
            hl, note = None, str(e)
        result.fits[kind] = SeriesFit(kind, d, t, y, fit, hl, note)

    f, r = result.fits.get("daily_fraction"), result.fits.get("daily_confirmed")
    if f is not None and r is not None and r.fit.slope != 0 and f.fit.slope != 0:
        result.ratio = slope_ratio(f.fit, r.fit)
    return result


# -- output -------------------------------------------------------------------


def _num(v: float | None) -> str:
    return "" if v is None else f"{v:.6g}"


def fit_rows(results) -> list[tuple]:
    rows = []
    for res in results:
        for kind in SERIES_KINDS:
            sf = res.fits.get(kind)
            if sf is None:
                continue
            fit, hl = sf.fit, sf.half_life
            rows.append(
                (
                    str(res.region),
                    kind,
                    _num(fit.slope),
                    _num(fit.slope_ci_95[0]),
                    _num(fit.slope_ci_95[1]),
                    fit.n,
                    _num(hl.value if hl else None),
                    _num(hl.ci_95[0] if hl else None),
                    _num(hl.ci_95[1] if hl else None),
                    hl.kind if hl else "indeterminate",
                )
            )
    return rows


def fits_to_csv(results) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIT_COLUMNS)
    w.writerows(fit_rows(results))
    return buf.getvalue()


def summary_to_csv(results) -> str:
    """Slope ratios and change points, one row per analysed region."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ("region", "start_date", "slope_ratio", "half_life_ratio", "break_date", "left_slope", "right_slope", "skipped")
    )
    for res in results:
        cp = res.change
        w.writerow(
            (
                str(res.region),
                "" if res.start_date is None else res.start_date.isoformat(),
                _num(res.ratio.ratio if res.ratio else None),
                _num(res.ratio.half_life_ratio if res.ratio else None),
                "" if cp is None or cp.break_date is None else cp.break_date.isoformat(),
                _num(cp.left.slope if cp else None),
                _num(cp.right.slope if cp else None),
                res.skipped or "",
            )
        )
    return buf.getvalue()


def _ci(pair) -> str:
    return f"({pair[0]:.3f}, {pair[1]:.3f})"


def caption(res: RegionAnalysis) -> str:
    """Plain-text paragraph summarising a region's fits."""
    if res.skipped:
        return f"{res.region}: no regression performed ({res.skipped})."
    parts = [f"{res.region}: regression from {res.start_date}."]
    names = {
        "daily_fraction": "a_f",
        "daily_confirmed": "a_raw",
        "daily_tests": "tests slope",
        "cumulative_fraction": "cumulative slope",
    }
    for kind in SERIES_KINDS:
        sf = res.fits.get(kind)
        if sf is None:
            continue
        s = f"{_DESCRIPTION[kind]}: {names[kind]} = {sf.fit.slope:.3f} {_ci(sf.fit.slope_ci_95)}"
        if sf.half_life is not None:
            label = "half-life" if sf.half_life.kind == "half_life" else "doubling time"
            s += f", {label} (days) {sf.half_life.value:.3f} {_ci(sf.half_life.ci_95)}"
        s += "."
        parts.append(s)
    if res.ratio is not None:
        parts.append(
            f"Ratio of slopes a_f/a_raw = {res.ratio.ratio:.3f}, half-lives' ratio {res.ratio.half_life_ratio:.3f}."
        )
    if res.change is not None and res.change.break_date is not None:
        parts.append(
            f"Change point of the daily fraction: {res.change.break_date} "
            f"(slopes {res.change.left.slope:.3f} before, {res.change.right.slope:.3f} after)."
        )
    return " ".join(parts)

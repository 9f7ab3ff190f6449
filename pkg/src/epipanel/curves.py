"""Construction of the labelled comparison curves.

Ratio curves never emit infinities: a point whose denominator is not
positive is dropped and recorded in ``CurveSeries.omitted`` (and logged).
Weekly curves use the day-of-year week blocks from :mod:`epipanel.core`,
the same axis the mortality file is binned on.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    BASELINE_YEARS,
    MORTALITY_YEARS,
    EpiPanel,
    MortalityTable,
    WeekBin,
    daily_from_cumulative,
    to_date,
    weekly_aggregate,
    year_of,
)
from .quality import AnalysisView
from .regions import CASE_REGIONS, MORTALITY_REGIONS, RegionId

log = logging.getLogger(__name__)

DIAMOND_PRINCESS_POPULATION = 3711
# Baseline is held constant from the week holding this day onwards.
TERMINAL_DAY = (4, 15)


class CurveKind(enum.Enum):
    DPConfirmedScaled = 1
    ConfirmedOverTests = 2
    CovidFracCumulDeaths = 3
    CovidFracCumulDeathsWrtPast = 4
    CovidFracExcessDeaths = 5
    CovidFracWeeklyDeaths = 6
    CovidFracWeeklyDeathsWrtPast = 7
    Deaths2020WrtPast = 8
    ConfirmedDaily = 9
    LogConfirmedMinusLogTestsDaily = 10
    LogConfirmedMinusLogTestsCumulative = 11
    TestsDaily = 12
    RawWeeklyDeathToll = 13

    @classmethod
    def parse(cls, name: str) -> "CurveKind":
        try:
            return cls[name]
        except KeyError:
            raise ValueError(f"unknown curve kind {name!r}") from None


LEGEND = {
    CurveKind.DPConfirmedScaled: "(DP) Confirmed Scaled",
    CurveKind.ConfirmedOverTests: "Confirmed/Tests",
    CurveKind.CovidFracCumulDeaths: "COVID frac cumul deaths",
    CurveKind.CovidFracCumulDeathsWrtPast: "COVID frac cumul deaths wrt past",
    CurveKind.CovidFracExcessDeaths: "COVID frac excess deaths",
    CurveKind.CovidFracWeeklyDeaths: "COVID frac weekly deaths",
    CurveKind.CovidFracWeeklyDeathsWrtPast: "COVID frac weekly deaths wrt past",
    CurveKind.Deaths2020WrtPast: "deaths in 2020 wrt past",
    CurveKind.ConfirmedDaily: "Confirmed",
    CurveKind.LogConfirmedMinusLogTestsDaily: "Confirmed - Tests",
    CurveKind.LogConfirmedMinusLogTestsCumulative: "Confirmed - Tests cumulative",
    CurveKind.TestsDaily: "Tests",
    CurveKind.RawWeeklyDeathToll: "Weekly deaths",
}

MORTALITY_KINDS = frozenset(
    {
        CurveKind.CovidFracCumulDeaths,
        CurveKind.CovidFracCumulDeathsWrtPast,
        CurveKind.CovidFracExcessDeaths,
        CurveKind.CovidFracWeeklyDeaths,
        CurveKind.CovidFracWeeklyDeathsWrtPast,
        CurveKind.Deaths2020WrtPast,
    }
)
# The ratio curves drawn together on one chart.
RATIO_KINDS = (
    CurveKind.ConfirmedOverTests,
    CurveKind.CovidFracCumulDeaths,
    CurveKind.CovidFracCumulDeathsWrtPast,
    CurveKind.CovidFracExcessDeaths,
    CurveKind.CovidFracWeeklyDeaths,
    CurveKind.CovidFracWeeklyDeathsWrtPast,
    CurveKind.Deaths2020WrtPast,
    CurveKind.LogConfirmedMinusLogTestsCumulative,
)
COUNT_KINDS = (
    CurveKind.ConfirmedDaily,
    CurveKind.TestsDaily,
    CurveKind.LogConfirmedMinusLogTestsDaily,
)


class MissingInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CurveSeries:
    kind: CurveKind
    region: RegionId
    x: tuple  # datetime.date or WeekBin
    y: np.ndarray
    scale_hint: str = "linear"
    label: str = ""
    omitted: tuple[tuple[object, str], ...] = ()

    def __post_init__(self):
        y = np.array(self.y, dtype=np.float64)
        if len(self.x) != y.size:
            raise ValueError("x and y differ in length")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", tuple(self.x))
        object.__setattr__(self, "omitted", tuple(self.omitted))

    def __len__(self) -> int:
        return len(self.x)

    @property
    def name(self) -> str:
        return self.kind.name + (f"[{self.label}]" if self.label else "")

    def as_dict(self) -> dict:
        return dict(zip(self.x, self.y.tolist()))

    def x_dates(self) -> list[dt.date]:
        """x as calendar dates (week curves use each block's first day)."""
        return [v.start_date if isinstance(v, WeekBin) else v for v in self.x]


def _ratio(kind, region, xs, num, den, scale="linear", label="") -> CurveSeries:
    keep_x, keep_y, omitted = [], [], []
    for x, a, b in zip(xs, num, den):
        if b > 0:
            keep_x.append(x)
            keep_y.append(float(a) / float(b))
        else:
            omitted.append((x, f"denominator {b} not positive"))
    for x, why in omitted:
        log.info("%s %s: point %s omitted (%s)", region, kind.name, x, why)
    return CurveSeries(kind, region, keep_x, keep_y, scale, label, omitted)


def _log_diff(kind, region, xs, num, den) -> CurveSeries:
    keep_x, keep_y, omitted = [], [], []
    for x, a, b in zip(xs, num, den):
        if a > 0 and b > 0:
            keep_x.append(x)
            keep_y.append(float(np.log(a) - np.log(b)))
        else:
            omitted.append((x, f"log undefined for ({a}, {b})"))
    for x, why in omitted:
        log.info("%s %s: point %s omitted (%s)", region, kind.name, x, why)
    return CurveSeries(kind, region, keep_x, keep_y, "linear", "", omitted)


# -- baselines ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BaselineMortality:
    region: RegionId
    sex: str
    age_band: str
    weekly_mean: np.ndarray  # entry i is week i + 1
    terminal_mean: float
    terminal_week: int

    def __post_init__(self):
        a = np.array(self.weekly_mean, dtype=np.float64)
        a.setflags(write=False)
        object.__setattr__(self, "weekly_mean", a)

    @property
    def n_weeks(self) -> int:
        return self.weekly_mean.size

    def at(self, week: int) -> float:
        """Baseline for ``week``, held at ``terminal_mean`` past the data."""
        if week <= self.terminal_week:
            return float(self.weekly_mean[week - 1])
        return self.terminal_mean


class InsufficientYearsError(ValueError):
    pass


def terminal_week(n_weeks: int) -> int:
    # Day-of-year of 15 April in a common year; the reference years fix it.
    wb = WeekBin.of(dt.date(2019, *TERMINAL_DAY))
    return min(wb.week_index, n_weeks)


def build_baseline(mortality: MortalityTable, sex: str = "total", age_band: str | None = None) -> BaselineMortality:
    """Arithmetic mean over the five reference years, week by week."""
    missing = [y for y in BASELINE_YEARS if not mortality.has(y, sex)]
    if missing:
        raise InsufficientYearsError(f"{mortality.region}: reference years missing: {missing}")
    stack = np.array([mortality.weekly(y, sex, age_band) for y in BASELINE_YEARS], dtype=np.float64)
    mean = stack.sum(axis=0) / len(BASELINE_YEARS)
    tw = terminal_week(mortality.n_weeks)
    return BaselineMortality(mortality.region, sex, age_band or "all", mean, float(mean[tw - 1]), tw)


def build_baselines(mortality: MortalityTable) -> dict[tuple[str, str], BaselineMortality]:
    """Baselines for every (sex, age band) slice, plus the all-ages one."""
    out = {}
    for sex in ("male", "female", "total"):
        if not mortality.has(BASELINE_YEARS[0], sex):
            continue
        out[(sex, "all")] = build_baseline(mortality, sex)
        for band in mortality.age_bands:
            out[(sex, band)] = build_baseline(mortality, sex, band)
    return out


# -- curves -------------------------------------------------------------------


def covid_weekly_deaths(panel: EpiPanel, year: int = 2020):
    """Weekly case fatalities from the case panel, as (weeks, values).

    Differencing happens before binning, so deaths reported before the
    panel's first day are booked on that day.
    """
    dates = panel.dates
    daily = daily_from_cumulative(panel.deaths_cum)
    in_year = year_of(dates) == year
    if not in_year.any():
        raise MissingInputError(f"{panel.region}: no panel dates in {year}")
    ws = weekly_aggregate(dates[in_year], daily[in_year], year)
    return np.array(ws.weeks, dtype=int), ws.values.astype(np.int64)


def build_curve(
    kind: CurveKind,
    panel: EpiPanel,
    mortality: MortalityTable | None = None,
    baseline: BaselineMortality | None = None,
    dp_population: int = DIAMOND_PRINCESS_POPULATION,
    view: AnalysisView | None = None,
    year: int = 2020,
) -> CurveSeries:
    """Build one labelled curve for ``panel``'s region.

    Mortality-based kinds need the region's all-cause table and its
    baseline. ``view`` restricts the daily log-difference curve to the
    dates a quality view keeps.
    """
    kind = CurveKind(kind)
    region = panel.region
    dates = [to_date(d) for d in panel.dates]

    if kind is CurveKind.DPConfirmedScaled:
        if region is not RegionId.DIAMOND_PRINCESS:
            raise ValueError(f"{kind.name} only applies to the Diamond Princess, not {region}")
        pop = panel.population or dp_population
        return _ratio(kind, region, dates, panel.confirmed_cum, np.full(len(dates), pop))
    if kind is CurveKind.ConfirmedOverTests:
        return _ratio(kind, region, dates, panel.confirmed_cum, panel.field("tests_cum"))
    if kind is CurveKind.ConfirmedDaily:
        return CurveSeries(kind, region, dates, daily_from_cumulative(panel.confirmed_cum), "log")
    if kind is CurveKind.TestsDaily:
        return CurveSeries(kind, region, dates, daily_from_cumulative(panel.field("tests_cum")), "log")
    if kind is CurveKind.LogConfirmedMinusLogTestsCumulative:
        return _log_diff(kind, region, dates, panel.confirmed_cum, panel.field("tests_cum"))
    if kind is CurveKind.LogConfirmedMinusLogTestsDaily:
        conf = daily_from_cumulative(panel.confirmed_cum)
        tests = daily_from_cumulative(panel.field("tests_cum"))
        if view is not None:
            if view.panel is not panel and not view.panel == panel:
                raise ValueError("view belongs to a different panel")
            m = view.mask
            curve = _log_diff(kind, region, [d for d, k in zip(dates, m) if k], conf[m], tests[m])
            dropped = tuple((d, "excluded by quality rules") for d, k in zip(dates, m) if not k)
            return CurveSeries(
                kind, region, curve.x, curve.y, "linear", "", tuple(sorted(dropped + curve.omitted, key=lambda p: p[0]))
            )
        return _log_diff(kind, region, dates, conf, tests)
    if kind in MORTALITY_KINDS:
        return _mortality_curve(kind, panel, mortality, baseline, year)
    raise ValueError(f"{kind.name} is built by raw_death_toll_curves")


def _mortality_curve(kind, panel, mortality, baseline, year) -> CurveSeries:
    region = panel.region
    if mortality is None or baseline is None:
        raise MissingInputError(f"{region}: {kind.name} needs mortality data and a baseline")
    if mortality.region != region or baseline.region != region:
        raise ValueError(f"{region}: mortality table is for {mortality.region}")
    weeks, covid = covid_weekly_deaths(panel, year)
    n = mortality.n_weeks
    all2020 = mortality.weekly(year, baseline.sex, None if baseline.age_band == "all" else baseline.age_band)
    base = np.array([baseline.at(w) for w in weeks])
    in_table = weeks <= n
    bins = [WeekBin(year, int(w)) for w in weeks]

    if kind is CurveKind.CovidFracCumulDeaths:
        # Cumulative all-cause deaths count from 1 January.
        cum_all = np.cumsum(all2020)
        w = weeks[in_table]
        return _ratio(kind, region, [b for b, k in zip(bins, in_table) if k], np.cumsum(covid)[in_table], cum_all[w - 1])
    if kind is CurveKind.CovidFracCumulDeathsWrtPast:
        before = np.arange(1, weeks[0]) if weeks.size else np.arange(0)
        base_before = sum(baseline.at(int(w)) for w in before)
        return _ratio(kind, region, bins, np.cumsum(covid), base_before + np.cumsum(base))
    if kind is CurveKind.CovidFracWeeklyDeathsWrtPast:
        return _ratio(kind, region, bins, covid, base)
    if kind is CurveKind.CovidFracWeeklyDeaths:
        w = weeks[in_table]
        return _ratio(kind, region, [bins[i] for i in np.flatnonzero(in_table)], covid[in_table], all2020[w - 1])
    if kind is CurveKind.CovidFracExcessDeaths:
        w = weeks[in_table]
        excess = all2020[w - 1] - base[in_table]
        return _ratio(kind, region, [bins[i] for i in np.flatnonzero(in_table)], covid[in_table], excess)
    if kind is CurveKind.Deaths2020WrtPast:
        w_all = np.arange(1, n + 1)
        base_all = np.array([baseline.at(int(w)) for w in w_all])
        return _ratio(kind, region, [WeekBin(year, int(w)) for w in w_all], all2020, base_all)
    raise AssertionError(kind)


def raw_death_toll_curves(
    mortality: MortalityTable,
    sex: str = "total",
    age_band: str | Sequence[str] | None = None,
) -> dict[int, CurveSeries]:
    """One weekly all-cause death curve per year, on a shared week axis."""
    band_label = "all" if age_band is None else (age_band if isinstance(age_band, str) else "+".join(age_band))
    out = {}
    for year in MORTALITY_YEARS:
        if not mortality.has(year, sex):
            continue
        try:
            y = mortality.weekly(year, sex, age_band)
        except KeyError:
            continue
        x = [WeekBin(year, w) for w in mortality.weeks]
        out[year] = CurveSeries(
            CurveKind.RawWeeklyDeathToll, mortality.region, x, y, "linear", f"{sex}/{band_label}/{year}"
        )
    if not out:
        raise MissingInputError(f"{mortality.region}: no deaths for sex={sex} age={band_label}")
    return out


@dataclass(frozen=True)
class PeakSummary:
    """Maximum weekly deaths in a winter and a spring window, per year."""

    winter_weeks: tuple[int, int]
    spring_weeks: tuple[int, int]
    winter_max: Mapping[int, float]
    spring_max: Mapping[int, float]

    @property
    def spring_2020_exceeds_past_winters(self) -> bool:
        past = [v for y, v in self.winter_max.items() if y != 2020]
        return bool(past) and self.spring_max.get(2020, -np.inf) > max(past)


def peak_summary(
    curves: Mapping[int, CurveSeries],
    winter_weeks: tuple[int, int] = (1, 5),
    spring_weeks: tuple[int, int] = (9, 15),
) -> PeakSummary:
    """Window maxima for comparing the 2020 spring peak with January peaks.

    Only peak heights are compared, not the number of deaths under them.
    """

    def window_max(c: CurveSeries, lo, hi):
        vals = [v for x, v in zip(c.x, c.y) if lo <= x.week_index <= hi]
        return float(max(vals)) if vals else float("nan")

    return PeakSummary(
        winter_weeks,
        spring_weeks,
        {y: window_max(c, *winter_weeks) for y, c in curves.items()},
        {y: window_max(c, *spring_weeks) for y, c in curves.items()},
    )


# -- national rollup ----------------------------------------------------------


class PartialRollupError(ValueError):
    pass


def national_rollup(panels: Mapping[RegionId, EpiPanel] | Iterable[EpiPanel]) -> EpiPanel:
    """Italy-wide panel as the date-by-date sum of all 21 regional panels."""
    panels = _by_region(panels)
    missing = [r for r in CASE_REGIONS if r not in panels]
    if missing:
        raise PartialRollupError(f"cannot roll up: missing regions {[str(r) for r in missing]}")
    parts = [panels[r] for r in CASE_REGIONS]
    dates = parts[0].dates
    for p in parts[1:]:
        if not np.array_equal(p.dates, dates):
            raise PartialRollupError(f"{p.region}: dates differ from {parts[0].region}")

    def total(name):
        cols = [getattr(p, name) for p in parts]
        if any(c is None for c in cols):
            return None
        return np.sum(cols, axis=0, dtype=np.int64)

    return EpiPanel(
        RegionId.ITALY,
        dates,
        total("confirmed_cum"),
        total("deaths_cum"),
        total("tests_cum"),
        total("hospitalized"),
    )


def national_mortality_rollup(tables: Mapping[RegionId, MortalityTable] | Iterable[MortalityTable]) -> MortalityTable:
    """Italy-wide mortality as the sum over the 20 mortality regions."""
    tables = _by_region(tables)
    missing = [r for r in MORTALITY_REGIONS if r not in tables]
    if missing:
        raise PartialRollupError(f"cannot roll up mortality: missing regions {[str(r) for r in missing]}")
    parts = [tables[r] for r in MORTALITY_REGIONS]
    n_weeks = parts[0].n_weeks
    if any(t.n_weeks != n_weeks for t in parts):
        raise PartialRollupError("mortality tables differ in week coverage")
    keys = set(parts[0].data)
    for t in parts[1:]:
        keys &= set(t.data)
    data = {k: np.sum([t.data[k] for t in parts], axis=0, dtype=np.int64) for k in keys}
    return MortalityTable(RegionId.ITALY, n_weeks, data, parts[0].age_bands)


def _by_region(items) -> dict:
    if isinstance(items, Mapping):
        return dict(items)
    out = {}
    for it in items:
        if it.region in out:
            raise ValueError(f"duplicate region {it.region}")
        out[it.region] = it
    return out


# -- serialization ------------------------------------------------------------

CURVE_COLUMNS = ("region", "kind", "x", "y")


def _x_text(x) -> str:
    return str(x) if isinstance(x, WeekBin) else x.isoformat()


def curves_to_csv(curves: Iterable[CurveSeries]) -> str:
    """Tidy table, one point per row, in the order the curves are given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for c in curves:
        for x, y in zip(c.x, c.y):
            w.writerow((str(c.region), c.name, _x_text(x), repr(float(y))))
    return buf.getvalue()

"""Canonical panel types and the small amount of time-series algebra shared by
every other module.

Dates are carried as ``numpy.datetime64[D]`` arrays. All containers freeze
their arrays on construction.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .regions import RegionId

DAYS_PER_WEEK = 7
MORTALITY_YEARS = tuple(range(2015, 2021))
BASELINE_YEARS = tuple(range(2015, 2020))
SEXES = ("male", "female", "total")


class EmptySeriesError(ValueError):
    pass


class NonPositiveValueError(ValueError):
    """Raised by :func:`log_series`; carries the offending position."""

    def __init__(self, index: int, date=None, value=None):
        self.index = index
        self.date = date
        self.value = value
        where = f"date {date}" if date is not None else f"index {index}"
        super().__init__(f"non-positive value {value!r} at {where}; cannot take log")


def _frozen(a, dtype=None) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def as_dates(values: Iterable) -> np.ndarray:
    """Coerce dates, ISO strings or datetime64 values to a frozen day array."""
    arr = np.array([np.datetime64(v, "D") for v in values], dtype="datetime64[D]")
    arr.setflags(write=False)
    return arr


def to_date(d: np.datetime64) -> dt.date:
    return np.datetime64(d, "D").astype(dt.date)


def day_of_year(dates: np.ndarray) -> np.ndarray:
    dates = np.asarray(dates, dtype="datetime64[D]")
    return (dates - dates.astype("datetime64[Y]")).astype(np.int64) + 1


def year_of(dates: np.ndarray) -> np.ndarray:
    return np.asarray(dates, dtype="datetime64[D]").astype("datetime64[Y]").astype(np.int64) + 1970


def _check_dates(dates: np.ndarray) -> None:
    if len(dates) > 1 and not np.all(np.diff(dates).astype(np.int64) > 0):
        raise ValueError("dates must be strictly increasing without duplicates")


# -- differencing -------------------------------------------------------------


def daily_from_cumulative(series: Sequence[int]) -> np.ndarray:
    """First differences, keeping the first value as is.

    Negative output is legal: it marks a drop in the cumulative count.
    """
    c = np.asarray(series, dtype=np.int64)
    if c.ndim != 1 or c.size == 0:
        raise EmptySeriesError("empty series")
    out = np.empty_like(c)
    out[0] = c[0]
    out[1:] = np.diff(c)
    return out


def cumulative_from_daily(series: Sequence[int]) -> np.ndarray:
    d = np.asarray(series, dtype=np.int64)
    if d.ndim != 1 or d.size == 0:
        raise EmptySeriesError("empty series")
    return np.cumsum(d)


def log_series(values: Sequence[float], dates: Sequence | None = None) -> np.ndarray:
    """Elementwise natural log; any non-positive entry is an error."""
    v = np.asarray(values, dtype=np.float64)
    bad = np.flatnonzero(~(v > 0))
    if bad.size:
        i = int(bad[0])
        raise NonPositiveValueError(i, None if dates is None else to_date(dates[i]), v[i])
    return np.log(v)


# -- week bins ----------------------------------------------------------------


@dataclass(frozen=True, order=True)
class WeekBin:
    """Seven-day block ``week_index`` of ``year``, anchored at 1 January.

    Week k covers day-of-year 7(k-1)+1 .. 7k, so the same index denotes the
    same calendar span in every year up to the leap day.
    """

    year: int
    week_index: int

    def __post_init__(self):
        if self.week_index < 1:
            raise ValueError("week_index is 1-based")

    @property
    def start_date(self) -> dt.date:
        return dt.date(self.year, 1, 1) + dt.timedelta(days=DAYS_PER_WEEK * (self.week_index - 1))

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=DAYS_PER_WEEK - 1)

    @property
    def is_complete(self) -> bool:
        """False for the trailing block that spills into the next year."""
        return self.end_date.year == self.year

    @classmethod
    def of(cls, day: dt.date | np.datetime64 | str) -> "WeekBin":
        d = to_date(np.datetime64(day, "D"))
        return cls(d.year, (d.timetuple().tm_yday - 1) // DAYS_PER_WEEK + 1)

    def __str__(self) -> str:
        return f"{self.year}-W{self.week_index:02d}"


@dataclass(frozen=True)
class WeeklySeries:
    year: int
    weeks: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weeks", tuple(int(w) for w in self.weeks))
        object.__setattr__(self, "values", _frozen(self.values))

    @property
    def bins(self) -> tuple[WeekBin, ...]:
        return tuple(WeekBin(self.year, w) for w in self.weeks)

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.weeks, self.values.tolist()))

    def __len__(self) -> int:
        return len(self.weeks)

    def __eq__(self, other):
        if not isinstance(other, WeeklySeries):
            return NotImplemented
        return (
            self.year == other.year
            and self.weeks == other.weeks
            and np.array_equal(self.values, other.values)
        )


def weekly_aggregate(dates: Sequence, values: Sequence, year: int | None = None) -> WeeklySeries:
    """Sum daily values into day-of-year week blocks.

    Blocks run from the one holding the first date to the last block that is
    fully covered; a trailing block the data stops inside of is dropped, as
    is the stub block at the end of the year. Missing days count as zero.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    vals = np.asarray(values)
    if dates.size == 0:
        raise EmptySeriesError("empty series")
    if dates.shape != vals.shape:
        raise ValueError("dates and values differ in length")
    years = year_of(dates)
    if year is None:
        year = int(years[0])
    if np.any(years != year):
        raise ValueError(f"series dates fall outside year {year}")
    doy = day_of_year(dates)
    week = (doy - 1) // DAYS_PER_WEEK + 1
    first, last = int(week.min()), int(week.max())
    last_bin = WeekBin(year, last)
    if not last_bin.is_complete or int(doy.max()) < DAYS_PER_WEEK * last:
        last -= 1
    if last < first:
        return WeeklySeries(year, (), np.zeros(0, dtype=vals.dtype))
    weeks = np.arange(first, last + 1)
    sums = np.zeros(weeks.size, dtype=np.result_type(vals.dtype, np.int64))
    keep = week <= last
    np.add.at(sums, week[keep] - first, vals[keep])
    return WeeklySeries(year, tuple(weeks.tolist()), sums)


# -- panels -------------------------------------------------------------------

PANEL_FIELDS = ("confirmed_cum", "deaths_cum", "tests_cum", "hospitalized")
CUMULATIVE_FIELDS = ("confirmed_cum", "deaths_cum", "tests_cum")


@dataclass(frozen=True, eq=False)
class DailySeries:
    region: RegionId
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "values", _frozen(self.values, np.int64))
        _check_dates(self.dates)
        if self.dates.shape != self.values.shape:
            raise ValueError("dates and values differ in length")

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (
            self.region == other.region
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values)
        )

    def cumulative(self) -> np.ndarray:
        return cumulative_from_daily(self.values)

    def weekly(self, year: int | None = None) -> WeeklySeries:
        return weekly_aggregate(self.dates, self.values, year)


@dataclass(frozen=True, eq=False)
class EpiPanel:
    """Daily cumulative counts for one region.

    ``tests_cum`` and ``hospitalized`` may be absent (None) when a source does
    not report them. ``hospitalized`` is a current-occupancy count, not a
    cumulative one. ``population`` is only set for closed populations such
    as a cruise ship.
    """

    region: RegionId
    dates: np.ndarray
    confirmed_cum: np.ndarray
    deaths_cum: np.ndarray
    tests_cum: np.ndarray | None = None
    hospitalized: np.ndarray | None = None
    population: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        if self.dates.size == 0:
            raise EmptySeriesError("panel has no dates")
        _check_dates(self.dates)
        for name in PANEL_FIELDS:
            v = getattr(self, name)
            if v is None:
                continue
            arr = _frozen(v, np.int64)
            if arr.shape != self.dates.shape:
                raise ValueError(f"{name} length {arr.size} != {self.dates.size} dates")
            if np.any(arr < 0):
                raise ValueError(f"{name} has negative counts")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.dates)

    def __eq__(self, other):
        if not isinstance(other, EpiPanel):
            return NotImplemented
        if self.region != other.region or self.population != other.population:
            return False
        if not np.array_equal(self.dates, other.dates):
            return False
        for name in PANEL_FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return True

    @property
    def first_date(self) -> dt.date:
        return to_date(self.dates[0])

    @property
    def last_date(self) -> dt.date:
        return to_date(self.dates[-1])

    @property
    def gaps(self) -> np.ndarray:
        """Calendar dates missing between the first and last date."""
        full = np.arange(self.dates[0], self.dates[-1] + 1, dtype="datetime64[D]")
        return np.setdiff1d(full, self.dates)

    def field(self, name: str) -> np.ndarray:
        v = getattr(self, name)
        if v is None:
            raise ValueError(f"{self.region}: field {name} not available")
        return v

    def daily(self, name: str) -> DailySeries:
        return DailySeries(self.region, self.dates, daily_from_cumulative(self.field(name)))

    def index_of(self, day) -> int:
        d = np.datetime64(day, "D")
        i = int(np.searchsorted(self.dates, d))
        if i >= len(self.dates) or self.dates[i] != d:
            raise KeyError(f"{self.region}: date {d} not in panel")
        return i

    def with_region(self, region: RegionId) -> "EpiPanel":
        return EpiPanel(
            region,
            self.dates,
            self.confirmed_cum,
            self.deaths_cum,
            self.tests_cum,
            self.hospitalized,
            self.population,
        )


# -- mortality ----------------------------------------------------------------

MortalityKey = tuple  # (sex, age_band, year)


@dataclass(frozen=True, eq=False)
class MortalityTable:
    """Weekly all-cause deaths for one region, split by sex, age band and year.

    ``data`` maps ``(sex, age_band, year)`` to an array whose i-th entry is
    the count for week ``i + 1``. All arrays share ``n_weeks``.
    """

    region: RegionId
    n_weeks: int
    data: Mapping[MortalityKey, np.ndarray] = field(default_factory=dict)
    age_bands: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        frozen = {}
        bands = set(self.age_bands)
        for key in sorted(self.data, key=_mortality_sort_key):
            sex, band, year = key
            if sex not in SEXES:
                raise ValueError(f"unknown sex {sex!r}")
            if year not in MORTALITY_YEARS:
                raise ValueError(f"year {year} outside {MORTALITY_YEARS[0]}-{MORTALITY_YEARS[-1]}")
            arr = _frozen(self.data[key], np.int64)
            if arr.shape != (self.n_weeks,):
                raise ValueError(f"{key}: expected {self.n_weeks} weeks, got {arr.shape}")
            if np.any(arr < 0):
                raise ValueError(f"{key}: negative count")
            frozen[(sex, str(band), int(year))] = arr
            bands.add(str(band))
        for (sex, band, year), arr in frozen.items():
            if sex != "total":
                continue
            m, f = frozen.get(("male", band, year)), frozen.get(("female", band, year))
            if m is not None and f is not None and not np.array_equal(arr, m + f):
                raise ValueError(f"{self.region} {band} {year}: total != male + female")
        order = list(self.age_bands) + sorted(bands - set(self.age_bands), key=_band_sort_key)
        object.__setattr__(self, "age_bands", tuple(order))
        object.__setattr__(self, "data", MappingProxyType(frozen))

    def __eq__(self, other):
        if not isinstance(other, MortalityTable):
            return NotImplemented
        return (
            self.region == other.region
            and self.n_weeks == other.n_weeks
            and self.data.keys() == other.data.keys()
            and all(np.array_equal(v, other.data[k]) for k, v in self.data.items())
        )

    @property
    def years(self) -> tuple[int, ...]:
        return tuple(sorted({k[2] for k in self.data}))

    @property
    def weeks(self) -> tuple[int, ...]:
        return tuple(range(1, self.n_weeks + 1))

    def weekly(self, year: int, sex: str = "total", age_band: str | Sequence[str] | None = None) -> np.ndarray:
        """Weekly deaths for one year; ``age_band=None`` sums all bands."""
        if age_band is None:
            bands = self.age_bands
        elif isinstance(age_band, str):
            bands = (age_band,)
        else:
            bands = tuple(age_band)
        parts = [self.data[(sex, b, year)] for b in bands if (sex, b, year) in self.data]
        if not parts:
            raise KeyError(f"{self.region}: no data for sex={sex} age={age_band} year={year}")
        return np.sum(parts, axis=0)

    def has(self, year: int, sex: str = "total") -> bool:
        return any(k[0] == sex and k[2] == year for k in self.data)


def _band_sort_key(band: str):
    head = band.split("-")[0].rstrip("+")
    return (0, int(head), band) if head.isdigit() else (1, 0, band)


def _mortality_sort_key(key):
    sex, band, year = key
    return (SEXES.index(sex) if sex in SEXES else 9, _band_sort_key(str(band)), year)

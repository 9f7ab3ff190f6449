"""Source adapters: delimited text in, canonical panels out."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from collections import defaultdict

import numpy as np
import pandas as pd

from ..core import (
    DAYS_PER_WEEK,
    EpiPanel,
    MortalityTable,
    cumulative_from_daily,
)
from ..regions import RegionId, UnknownRegionError
from .mapping import SchemaMapping

log = logging.getLogger(__name__)


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _decode(raw: str | bytes, encoding: str) -> str:
    if isinstance(raw, str):
        return raw
    try:
        return raw.decode(encoding)
    except UnicodeDecodeError:
        log.warning("input is not valid %s; decoding as latin-1", encoding)
        return raw.decode("latin-1")


def _read_rows(raw: str | bytes, mapping: SchemaMapping, needed: list[str]):
    """Yield (line number, row dict); the header is line 1."""
    text = _decode(raw, mapping.encoding).lstrip("﻿")
    reader = csv.DictReader(io.StringIO(text), delimiter=mapping.delimiter)
    header = reader.fieldnames
    if not header:
        raise ParseError("no rows")
    missing = [c for c in needed if c not in header]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)} in header", 1)
    for i, row in enumerate(reader):
        yield i + 2, row


def _parse_int(text: str, what: str, line: int) -> int:
    s = text.strip()
    try:
        return int(s)
    except ValueError:
        pass
    try:
        f = float(s)
    except ValueError:
        raise ParseError(f"{what}: {text!r} is not a count", line) from None
    if not f.is_integer():
        raise ParseError(f"{what}: {text!r} is not an integer count", line)
    return int(f)


def _parse_date(text: str, fmt: str, line: int) -> dt.date:
    try:
        return dt.datetime.strptime(text.strip(), fmt).date()
    except ValueError:
        pass
    # Tolerate a bare ISO date where a timestamp is declared, and vice versa.
    try:
        return dt.date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise ParseError(f"unparseable date {text!r} (expected {fmt})", line) from None


_CASE_VALUE_FIELDS = ("confirmed_cum", "deaths_cum", "tests_cum", "hospitalized")
_OPTIONAL = ("tests_cum", "hospitalized")


def parse_regional_cases(
    raw: str | bytes, mapping: SchemaMapping, default_region: RegionId | None = None
) -> dict[RegionId, EpiPanel]:
    """One panel per region, rows sorted by date.

    Incremental columns are accumulated. Duplicate (region, date) rows,
    unknown regions and malformed values are errors naming the line.
    """
    cols = {f: mapping.column(f) for f in ("date", "region", *_CASE_VALUE_FIELDS)}
    if cols["region"] is None and default_region is None:
        raise ParseError(f"{mapping.source_id}: no region column and no default region")
    needed = [c for c in cols.values() if c]
    grouped: dict[RegionId, dict[dt.date, dict]] = defaultdict(dict)
    first_line: dict[RegionId, int] = {}
    seen_rows = 0
    for line, row in _read_rows(raw, mapping, needed):
        seen_rows += 1
        if cols["region"]:
            try:
                region = mapping.resolve_region(row[cols["region"]])
            except UnknownRegionError as e:
                raise ParseError(str(e), line) from None
        else:
            region = default_region
        day = _parse_date(row[cols["date"]], mapping.date_format, line)
        if day in grouped[region]:
            raise ParseError(f"duplicate row for {region} on {day}", line)
        values = {}
        for name in _CASE_VALUE_FIELDS:
            col = cols[name]
            if col is None:
                continue
            text = row[col]
            if text is None or text.strip() in ("", "NA", "n.d."):
                if name not in _OPTIONAL:
                    raise ParseError(f"missing value in column {col}", line)
                values[name] = None
                continue
            values[name] = _parse_int(text, col, line)
        grouped[region][day] = values
        first_line.setdefault(region, line)
    if not seen_rows:
        raise ParseError("no rows")

    panels = {}
    for region, by_day in grouped.items():
        days = sorted(by_day)
        arrays = {}
        for name in _CASE_VALUE_FIELDS:
            if cols[name] is None:
                arrays[name] = None
                continue
            vals = [by_day[d].get(name) for d in days]
            if all(v is None for v in vals):
                arrays[name] = None
                continue
            if any(v is None for v in vals):
                raise ParseError(f"{region}: column {cols[name]} has gaps", first_line[region])
            arr = np.array(vals, dtype=np.int64)
            if mapping.semantics_of(name) == "incremental":
                arr = cumulative_from_daily(arr)
            arrays[name] = arr
        try:
            panels[region] = EpiPanel(
                region,
                np.array(days, dtype="datetime64[D]"),
                arrays["confirmed_cum"],
                arrays["deaths_cum"],
                arrays["tests_cum"],
                arrays["hospitalized"],
                mapping.population if region is RegionId.DIAMOND_PRINCESS else None,
            )
        except ValueError as e:
            raise ParseError(f"{region}: {e}") from None
    return dict(sorted(panels.items(), key=lambda kv: kv[0].value))


def parse_diamond_princess(raw: str | bytes, mapping: SchemaMapping) -> EpiPanel:
    """The cruise-ship series, with its closed population attached."""
    panels = parse_regional_cases(raw, mapping, default_region=RegionId.DIAMOND_PRINCESS)
    if RegionId.DIAMOND_PRINCESS not in panels:
        raise ParseError("no Diamond Princess rows")
    panel = panels[RegionId.DIAMOND_PRINCESS]
    if panel.population is None:
        from ..curves import DIAMOND_PRINCESS_POPULATION

        panel = EpiPanel(
            panel.region,
            panel.dates,
            panel.confirmed_cum,
            panel.deaths_cum,
            panel.tests_cum,
            panel.hospitalized,
            DIAMOND_PRINCESS_POPULATION,
        )
    return panel


def _cutoff_doy(year: int, cutoff: str) -> int:
    m, d = (int(p) for p in cutoff.split("-"))
    return dt.date(year, m, d).timetuple().tm_yday


def parse_mortality(raw: str | bytes, mapping: SchemaMapping) -> dict[RegionId, MortalityTable]:
    """Roll municipal daily deaths up to regional weekly tables.

    Days after the cutoff (15 April by default) are ignored. Only week
    blocks complete in every year are kept, so all years share one week
    axis. Cells holding a missing-value token contribute nothing.
    """
    cols = {f: mapping.column(f) for f in ("region", "municipality", "day", "age_class")}
    years = mapping.years or tuple(range(2015, 2021))
    sexes = mapping.sex_codes or {"male": "M", "female": "F", "total": "T"}
    count_cols = {
        (sex, year): mapping.count_column.format(sex=code, yy=f"{year % 100:02d}", year=year)
        for sex, code in sexes.items()
        for year in years
    }
    text = _decode(raw, mapping.encoding).lstrip("\ufeff")
    if not text.strip():
        raise ParseError("no rows")
    df = pd.read_csv(
        io.StringIO(text), sep=mapping.delimiter, dtype=str, keep_default_na=False, na_filter=False
    )
    needed = [c for c in cols.values() if c] + list(count_cols.values())
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise ParseError(f"missing column(s) {', '.join(missing)} in header", 1)
    if df.empty:
        raise ParseError("no rows")
    lines = np.arange(len(df)) + 2

    region_text = df[cols["region"]].str.strip()
    region_of = {}
    for name in region_text.unique():
        try:
            region_of[name] = mapping.resolve_region(name)
        except UnknownRegionError as e:
            raise ParseError(str(e), int(lines[(region_text == name).to_numpy()][0])) from None
    regions = region_text.map(region_of).to_numpy()

    band_text = df[cols["age_class"]].str.strip()
    bands = band_text.map(lambda b: mapping.age_classes.get(b, b)).to_numpy()

    day_text = df[cols["day"]].str.strip()
    md_of = {}
    for s in day_text.unique():
        md_of[s] = _month_day(s, mapping.date_format, int(lines[(day_text == s).to_numpy()][0]))
    months = day_text.map(lambda s: md_of[s][0]).to_numpy()
    days = day_text.map(lambda s: md_of[s][1]).to_numpy()

    n_weeks = min(_cutoff_doy(y, mapping.cutoff) for y in years) // DAYS_PER_WEEK
    missing_tokens = list(mapping.missing_values)
    parts = []
    for (sex, year), col in count_cols.items():
        cell = df[col].str.strip()
        present = ~cell.isin(missing_tokens).to_numpy()
        counts = pd.to_numeric(cell.where(present), errors="coerce").to_numpy()
        bad = present & ~(np.isfinite(counts) & (np.mod(counts, 1) == 0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ParseError(f"{col}: {cell.iloc[i]!r} is not a count", int(lines[i]))
        neg = present & (counts < 0)
        if neg.any():
            i = int(np.flatnonzero(neg)[0])
            raise ParseError(f"negative count {int(counts[i])} in {col}", int(lines[i]))
        doy = _day_of_year(year, months, days)
        invalid = present & (doy < 0) & (counts != 0)
        if invalid.any():
            i = int(np.flatnonzero(invalid)[0])
            raise ParseError(
                f"{col}: deaths on {months[i]:02d}-{days[i]:02d}, not a day in {year}", int(lines[i])
            )
        week = (doy - 1) // DAYS_PER_WEEK + 1
        keep = present & (doy > 0) & (doy <= _cutoff_doy(year, mapping.cutoff)) & (week <= n_weeks)
        if not keep.any():
            continue
        parts.append(
            pd.DataFrame(
                {
                    "region": regions[keep],
                    "sex": sex,
                    "band": bands[keep],
                    "year": year,
                    "week": week[keep],
                    "n": counts[keep].astype(np.int64),
                }
            )
        )

    band_order: dict[RegionId, list[str]] = defaultdict(list)
    for r, b in zip(regions, bands):
        if b not in band_order[r]:
            band_order[r].append(b)

    acc: dict[RegionId, dict[tuple, np.ndarray]] = defaultdict(dict)
    if parts:
        long = pd.concat(parts, ignore_index=True)
        summed = long.groupby(["region", "sex", "band", "year", "week"], sort=False)["n"].sum()
        for (region, sex, band, year, week), n in summed.items():
            key = (sex, band, int(year))
            arr = acc[region].get(key)
            if arr is None:
                arr = acc[region][key] = np.zeros(n_weeks, dtype=np.int64)
            arr[int(week) - 1] += int(n)

    out = {}
    for region in sorted(set(regions), key=lambda r: r.value):
        try:
            out[region] = MortalityTable(region, n_weeks, acc.get(region, {}), tuple(band_order[region]))
        except ValueError as e:
            raise ParseError(f"{region}: {e}") from None
    return out


def _month_day(text: str, fmt: str, line: int) -> tuple[int, int]:
    s = text.zfill(4) if fmt == "%m%d" else text
    try:
        parsed = dt.datetime.strptime(s, fmt)
    except ValueError:
        # 29 February parses only against a leap year.
        try:
            parsed = dt.datetime.strptime(f"2020{s}", "%Y" + fmt)
        except ValueError:
            raise ParseError(f"unparseable day {text!r}", line) from None
    return parsed.month, parsed.day


def _day_of_year(year: int, months: np.ndarray, days: np.ndarray) -> np.ndarray:
    """Day-of-year per row; -1 where (month, day) does not exist in ``year``."""
    out = np.full(months.shape, -1, dtype=np.int64)
    for m, d in set(zip(months.tolist(), days.tolist())):
        try:
            doy = dt.date(year, m, d).timetuple().tm_yday
        except ValueError:
            continue
        out[(months == m) & (days == d)] = doy
    return out

"""Dated, checksummed captures of harmonized data.

On disk a snapshot is a directory::

    manifest.json   format_version, source_id, fetched_at, coverage,
                    per-table sha256 and a content checksum over all tables
    panels.csv      region,date,confirmed_cum,deaths_cum,tests_cum,hospitalized,population
    mortality.csv   region,sex,age_band,year,week,deaths

Tables are written in a canonical order, so saving a loaded snapshot
reproduces the same bytes. Directories are written to a temporary sibling
and renamed into place; an existing snapshot is never overwritten.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import io
import json
import os
import shutil
import tempfile
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from ..core import EpiPanel, MortalityTable, WeekBin
from ..regions import RegionId

FORMAT_VERSION = 1
PANEL_COLUMNS = ("region", "date", "confirmed_cum", "deaths_cum", "tests_cum", "hospitalized", "population")
MORTALITY_COLUMNS = ("region", "sex", "age_band", "year", "week", "deaths")
TABLES = ("panels.csv", "mortality.csv")


class SnapshotError(ValueError):
    pass


class ChecksumError(SnapshotError):
    pass


class VersionError(SnapshotError):
    pass


def utc_now() -> str:
    return dt.datetime.now(dt.timezone.utc).replace(microsecond=0).isoformat()


@dataclass(frozen=True, eq=False)
class Snapshot:
    source_id: str
    fetched_at: str
    panels: Mapping[RegionId, EpiPanel] = field(default_factory=dict)
    mortality: Mapping[RegionId, MortalityTable] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "panels", dict(sorted(self.panels.items(), key=lambda kv: kv[0].value)))
        object.__setattr__(self, "mortality", dict(sorted(self.mortality.items(), key=lambda kv: kv[0].value)))
        for k, p in self.panels.items():
            if p.region != k:
                raise SnapshotError(f"panel keyed {k} holds {p.region}")
        for k, t in self.mortality.items():
            if t.region != k:
                raise SnapshotError(f"mortality keyed {k} holds {t.region}")

    @property
    def coverage(self) -> tuple[dt.date, dt.date] | None:
        """Earliest and latest calendar day present in any table."""
        days = []
        for p in self.panels.values():
            days += [p.first_date, p.last_date]
        for t in self.mortality.values():
            for year in t.years:
                days += [WeekBin(year, 1).start_date, WeekBin(year, t.n_weeks).end_date]
        if not days:
            return None
        return min(days), max(days)

    def same_content(self, other: "Snapshot") -> bool:
        """Equality ignoring ``fetched_at``."""
        return (
            self.source_id == other.source_id
            and self.panels.keys() == other.panels.keys()
            and all(p == other.panels[k] for k, p in self.panels.items())
            and self.mortality.keys() == other.mortality.keys()
            and all(t == other.mortality[k] for k, t in self.mortality.items())
        )

    def __eq__(self, other):
        if not isinstance(other, Snapshot):
            return NotImplemented
        return self.fetched_at == other.fetched_at and self.same_content(other)

    def content_checksum(self) -> str:
        return _content_checksum(_render_tables(self))


def _fmt(v) -> str:
    return "" if v is None else str(int(v))


def _render_tables(snap: Snapshot) -> dict[str, bytes]:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PANEL_COLUMNS)
    for region, p in snap.panels.items():
        for i, d in enumerate(p.dates):
            w.writerow(
                (
                    region.value,
                    str(d),
                    _fmt(p.confirmed_cum[i]),
                    _fmt(p.deaths_cum[i]),
                    _fmt(None if p.tests_cum is None else p.tests_cum[i]),
                    _fmt(None if p.hospitalized is None else p.hospitalized[i]),
                    _fmt(p.population),
                )
            )
    panels = buf.getvalue().encode("utf-8")

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MORTALITY_COLUMNS)
    for region, t in snap.mortality.items():
        for (sex, band, year), arr in t.data.items():
            for week, n in enumerate(arr.tolist(), start=1):
                w.writerow((region.value, sex, band, year, week, n))
    mortality = buf.getvalue().encode("utf-8")
    return {"panels.csv": panels, "mortality.csv": mortality}


def _content_checksum(tables: Mapping[str, bytes]) -> str:
    h = hashlib.sha256()
    for name in TABLES:
        h.update(name.encode())
        h.update(b"\0")
        h.update(hashlib.sha256(tables[name]).hexdigest().encode())
    return h.hexdigest()


def _manifest(snap: Snapshot, tables: Mapping[str, bytes]) -> bytes:
    cov = snap.coverage
    doc = {
        "format_version": FORMAT_VERSION,
        "source_id": snap.source_id,
        "fetched_at": snap.fetched_at,
        "coverage": None if cov is None else [cov[0].isoformat(), cov[1].isoformat()],
        "regions": [r.value for r in snap.panels],
        "mortality_regions": [r.value for r in snap.mortality],
        "tables": {name: hashlib.sha256(tables[name]).hexdigest() for name in TABLES},
        "checksum": _content_checksum(tables),
    }
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")


def save_snapshot(snap: Snapshot, path: str | Path) -> Path:
    """Write ``snap`` as a new directory at ``path`` (atomic rename)."""
    path = Path(path)
    if path.exists():
        raise SnapshotError(f"{path} exists; snapshots are immutable")
    path.parent.mkdir(parents=True, exist_ok=True)
    tables = _render_tables(snap)
    tmp = Path(tempfile.mkdtemp(prefix=f".{path.name}.", dir=path.parent))
    try:
        for name, data in tables.items():
            (tmp / name).write_bytes(data)
        (tmp / "manifest.json").write_bytes(_manifest(snap, tables))
        os.rename(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return path


def read_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads((path / "manifest.json").read_text("utf-8"))
    except FileNotFoundError:
        raise SnapshotError(f"{path}: no manifest.json") from None
    except json.JSONDecodeError as e:
        raise ChecksumError(f"{path}: manifest unreadable ({e})") from None
    version = doc.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise VersionError(f"{path}: format version {version!r} not supported (max {FORMAT_VERSION})")
    return doc


def load_snapshot(path: str | Path) -> Snapshot:
    """Read and verify a snapshot directory."""
    path = Path(path)
    doc = read_manifest(path)
    tables = {}
    for name in TABLES:
        try:
            data = (path / name).read_bytes()
        except FileNotFoundError:
            raise ChecksumError(f"{path}: table {name} missing") from None
        if hashlib.sha256(data).hexdigest() != doc.get("tables", {}).get(name):
            raise ChecksumError(f"{path}: checksum mismatch for {name}")
        tables[name] = data
    if _content_checksum(tables) != doc.get("checksum"):
        raise ChecksumError(f"{path}: content checksum mismatch")

    panels = _read_panels(tables["panels.csv"])
    mortality = _read_mortality(tables["mortality.csv"])
    return Snapshot(doc["source_id"], doc["fetched_at"], panels, mortality)


def _read_panels(data: bytes) -> dict[RegionId, EpiPanel]:
    rows = defaultdict(list)
    reader = csv.DictReader(io.StringIO(data.decode("utf-8")))
    for row in reader:
        rows[RegionId(row["region"])].append(row)

    def col(rs, name):
        vals = [r[name] for r in rs]
        if all(v == "" for v in vals):
            return None
        return np.array([int(v) for v in vals], dtype=np.int64)

    out = {}
    for region, rs in rows.items():
        pop = rs[0]["population"]
        out[region] = EpiPanel(
            region,
            np.array([r["date"] for r in rs], dtype="datetime64[D]"),
            col(rs, "confirmed_cum"),
            col(rs, "deaths_cum"),
            col(rs, "tests_cum"),
            col(rs, "hospitalized"),
            int(pop) if pop else None,
        )
    return out


def _read_mortality(data: bytes) -> dict[RegionId, MortalityTable]:
    cells: dict = defaultdict(lambda: defaultdict(dict))
    bands: dict = defaultdict(list)
    n_weeks: dict = defaultdict(int)
    for row in csv.DictReader(io.StringIO(data.decode("utf-8"))):
        region = RegionId(row["region"])
        key = (row["sex"], row["age_band"], int(row["year"]))
        week = int(row["week"])
        cells[region][key][week] = int(row["deaths"])
        n_weeks[region] = max(n_weeks[region], week)
        if row["age_band"] not in bands[region]:
            bands[region].append(row["age_band"])
    out = {}
    for region, by_key in cells.items():
        n = n_weeks[region]
        data_ = {k: np.array([w.get(i, 0) for i in range(1, n + 1)], dtype=np.int64) for k, w in by_key.items()}
        out[region] = MortalityTable(region, n, data_, tuple(bands[region]))
    return out


def build_snapshot(
    source_id: str,
    panels: Mapping[RegionId, EpiPanel] | None = None,
    mortality: Mapping[RegionId, MortalityTable] | None = None,
    fetched_at: str | None = None,
) -> Snapshot:
    return Snapshot(source_id, fetched_at or utc_now(), dict(panels or {}), dict(mortality or {}))


def merge_snapshots(parts: list[Snapshot], fetched_at: str | None = None) -> Snapshot:
    """Combine captures of different sources; region keys must not clash."""
    panels, mortality = {}, {}
    for s in parts:
        for k, v in s.panels.items():
            if k in panels:
                raise SnapshotError(f"region {k} supplied by two sources")
            panels[k] = v
        for k, v in s.mortality.items():
            if k in mortality:
                raise SnapshotError(f"mortality region {k} supplied by two sources")
            mortality[k] = v
    source_id = "+".join(s.source_id for s in parts)
    return Snapshot(source_id, fetched_at or max((s.fetched_at for s in parts), default=utc_now()), panels, mortality)

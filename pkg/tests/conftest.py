import datetime as dt

import numpy as np
import pytest

import synthetic
from epipanel.core import EpiPanel, MortalityTable
from epipanel.ingest import ingest_files, load_mapping, save_snapshot
from epipanel.regions import RegionId


@pytest.fixture(scope="session")
def synthetic_files(tmp_path_factory):
    return synthetic.write_all(tmp_path_factory.mktemp("synthetic"))


@pytest.fixture(scope="session")
def synthetic_snapshot(synthetic_files):
    pairs = [(path, load_mapping(name)) for name, path in synthetic_files.items()]
    return ingest_files(pairs, fetched_at="2020-05-11T00:00:00+00:00")


@pytest.fixture(scope="session")
def snapshot_dir(synthetic_snapshot, tmp_path_factory):
    return save_snapshot(synthetic_snapshot, tmp_path_factory.mktemp("snap") / "snapshot")


def make_panel(confirmed, tests=None, deaths=None, start="2020-03-01", region=RegionId.LOMBARDIA, **kw):
    n = len(confirmed)
    dates = np.arange(np.datetime64(start), np.datetime64(start) + n, dtype="datetime64[D]")
    if deaths is None:
        deaths = np.zeros(n, dtype=int)
    return EpiPanel(region, dates, confirmed, deaths, tests, **kw)


def make_mortality(region, weekly, n_weeks=15, bands=("80-84",)):
    """Table whose per-year weekly totals come from ``weekly[year]`` (split
    evenly over bands, male getting the odd remainder)."""
    data = {}
    for year, totals in weekly.items():
        totals = np.broadcast_to(np.asarray(totals, dtype=np.int64), (n_weeks,))
        per_band = [totals // len(bands)] * len(bands)
        per_band[0] = totals - (len(bands) - 1) * (totals // len(bands))
        for band, vals in zip(bands, per_band):
            male = vals - vals // 2
            data[("male", band, year)] = male
            data[("female", band, year)] = vals - male
            data[("total", band, year)] = vals
    return MortalityTable(region, n_weeks, data, tuple(bands))


D = dt.date


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) != "call":
                continue
            lines += [v for k, v in rep.user_properties if k == "criterion"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

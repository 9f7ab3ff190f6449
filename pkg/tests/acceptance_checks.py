"""Checks behind the acceptance suite, shared with its synthetic dry run.

Each check takes the analysed inputs and returns an :class:`Outcome` whose
``detail`` lists the measured values, so a failing line says by how much.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from epipanel.analysis import analyze_region
from epipanel.config import load_config
from epipanel.curves import CurveKind, build_baseline, build_curve, national_mortality_rollup, national_rollup
from epipanel.ingest import ingest_files, load_mapping
from epipanel.quality import apply_exclusions, detect_anomalies
from epipanel.regions import CASE_REGIONS, MORTALITY_REGIONS, RegionId, mortality_region

REPO = Path(__file__).resolve().parent.parent
CASES_FILE = "dpc-covid19-ita-regioni.csv"
MORTALITY_FILE = "comuni_giornaliero.csv"
FETCHED_AT = "2020-05-11T00:00:00+00:00"


class FixtureMissing(Exception):
    pass


@dataclass
class Outcome:
    parts: list[tuple[str, bool]] = field(default_factory=list)

    def check(self, text: str, ok: bool) -> None:
        self.parts.append((text, bool(ok)))

    @property
    def ok(self) -> bool:
        return bool(self.parts) and all(ok for _, ok in self.parts)

    @property
    def detail(self) -> str:
        return "; ".join(t if ok else f"{t} [FAILED]" for t, ok in self.parts)


def within(value: float, target: float, tol: float) -> bool:
    return abs(value - target) <= tol + 1e-12


# -- fixtures -----------------------------------------------------------------


def real_fixture_dir() -> Path:
    return Path(os.environ.get("EPIPANEL_REAL_FIXTURES", REPO / "fixtures" / "real"))


def real_fixture_paths() -> dict[str, Path]:
    d = real_fixture_dir()
    paths = {"dpc-regioni": d / CASES_FILE, "istat-comuni": d / MORTALITY_FILE}
    missing = [str(p) for p in paths.values() if not p.is_file()]
    if missing:
        raise FixtureMissing(
            "archived source file(s) not present: " + ", ".join(missing)
            + " (set EPIPANEL_REAL_FIXTURES or vendor them under fixtures/real/)"
        )  # fmt: skip
    return paths


def snapshot_from(paths: dict[str, Path]):
    return ingest_files([(p, load_mapping(name)) for name, p in paths.items()], fetched_at=FETCHED_AT)


def window_config():
    """Defaults plus regression windows opening at the change point."""
    path = resources.files("epipanel").joinpath("configs", "after_break.yaml")
    with resources.as_file(path) as p:
        return load_config(p)


# -- criteria -------------------------------------------------------------------


def check_lombardy(snap, cfg) -> Outcome:
    out = Outcome()
    t0 = time.perf_counter()
    res = analyze_region(snap.panels[RegionId.LOMBARDIA], cfg)
    elapsed = time.perf_counter() - t0
    f, c = res.fits["daily_fraction"], res.fits["cumulative_fraction"]
    out.check(f"a_f={f.fit.slope:.4f} (target -0.047 +/- 0.004)", within(f.fit.slope, -0.047, 0.004))
    hl = f.half_life.value if f.half_life else math.nan
    out.check(f"half-life={hl:.2f} d (target 14.8 +/- 1.2)", within(hl, 14.8, 1.2))
    out.check(f"cumulative slope={c.fit.slope:.4f} (target -0.016 +/- 0.002)", within(c.fit.slope, -0.016, 0.002))
    out.check(f"runtime={elapsed:.3f} s (< 1 s)", elapsed < 1.0)
    return out


def check_italy(snap, cfg) -> Outcome:
    out = Outcome()
    italy = national_rollup({r: snap.panels[r] for r in CASE_REGIONS if r in snap.panels})
    res = analyze_region(italy, cfg)
    a_f = res.fits["daily_fraction"].fit.slope
    a_raw = res.fits["daily_confirmed"].fit.slope
    a_c = res.fits["cumulative_fraction"].fit.slope
    ratio = res.ratio.ratio if res.ratio else math.nan
    out.check(f"a_f={a_f:.4f} (target -0.051 +/- 0.004)", within(a_f, -0.051, 0.004))
    out.check(f"a_raw={a_raw:.4f} (target -0.027 +/- 0.004)", within(a_raw, -0.027, 0.004))
    out.check(f"slope ratio={ratio:.3f} (target 1.882 +/- 0.15)", within(ratio, 1.882, 0.15))
    out.check(f"cumulative slope={a_c:.4f} (target -0.019 +/- 0.002)", within(a_c, -0.019, 0.002))
    return out


def all_region_results(snap, cfg):
    return {r: analyze_region(snap.panels[r], cfg) for r in CASE_REGIONS if r in snap.panels}


def check_veneto_and_signs(snap, cfg, results) -> Outcome:
    out = Outcome()
    f = results[RegionId.VENETO].fits["daily_fraction"]
    hl = f.half_life.value if f.half_life else math.nan
    out.check(f"Veneto a_f={f.fit.slope:.4f} (target -0.059 +/- 0.005)", within(f.fit.slope, -0.059, 0.005))
    out.check(f"Veneto half-life={hl:.2f} d (target 11.7 +/- 1.2)", within(hl, 11.7, 1.2))
    both = bad = 0
    offenders = []
    for r, res in results.items():
        if "daily_fraction" in res.fits and "daily_confirmed" in res.fits:
            both += 1
            a_f, a_raw = res.fits["daily_fraction"].fit.slope, res.fits["daily_confirmed"].fit.slope
            if not a_f < a_raw < 0:
                bad += 1
                offenders.append(f"{r} ({a_f:.4f}, {a_raw:.4f})")
    out.check(
        f"a_f < a_raw < 0 in {both - bad}/{both} regions" + (f": {', '.join(offenders)}" if offenders else ""),
        both > 0 and bad == 0,
    )
    return out


def check_sign_sweep(results) -> Outcome:
    out = Outcome()
    slopes = {r: res.fits["daily_fraction"].fit.slope for r, res in results.items() if "daily_fraction" in res.fits}
    positive = [f"{r} ({a:.4f})" for r, a in slopes.items() if not a < 0]
    out.check(
        f"{len(slopes) - len(positive)}/{len(slopes)} fitted a_f negative" + (f": {', '.join(positive)}" if positive else ""),
        bool(slopes) and not positive,
    )
    return out


def check_change_points(results) -> Outcome:
    out = Outcome()
    lo, hi = dt.date(2020, 3, 10), dt.date(2020, 3, 28)
    for r in (RegionId.LOMBARDIA, RegionId.VENETO):
        cp = results[r].change
        when = cp.break_date if cp else None
        out.check(f"{r} change point {when} (in {lo}..{hi})", when is not None and lo <= when <= hi)
    return out


def oracle_mortality(path: Path, weeks: int, year: int = 2020):
    """Direct sums over the municipal file: national weekly totals, the
    Trentino (provinces 21 and 22) weekly totals and the municipality count."""
    raw = path.read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError:
        text = raw.decode("latin-1")
    col = f"T_{year % 100:02d}"
    cutoff = dt.date(year, 4, 15).timetuple().tm_yday
    national = np.zeros(weeks, dtype=np.int64)
    trentino = np.zeros(weeks, dtype=np.int64)
    municipalities = set()
    for row in csv.DictReader(io.StringIO(text.lstrip("﻿"))):
        municipalities.add(row["COD_PROVCOM"].strip())
        cell = row[col].strip()
        if cell in ("n.d.", ""):
            continue
        ge = row["GE"].strip().zfill(4)
        try:
            doy = dt.date(year, int(ge[:2]), int(ge[2:])).timetuple().tm_yday
        except ValueError:
            continue
        week = (doy - 1) // 7 + 1
        if doy > cutoff or week > weeks:
            continue
        national[week - 1] += int(cell)
        if row["PROV"].strip().lstrip("0") in ("21", "22"):
            trentino[week - 1] += int(cell)
    return national, trentino, len(municipalities)


def check_mortality_conservation(snap, mortality_path: Path) -> Outcome:
    out = Outcome()
    italy = national_mortality_rollup(snap.mortality)
    national, trentino, n_mun = oracle_mortality(mortality_path, italy.n_weeks)
    got = italy.weekly(2020, "total")
    diff = int(np.abs(got - national).max())
    out.check(f"national 2020 weekly totals vs direct sum over {n_mun} municipalities: max |diff|={diff}", diff == 0)
    out.check(
        f"{len(snap.mortality)} mortality regions, Bolzano+Trento merged",
        set(snap.mortality) == set(MORTALITY_REGIONS)
        and RegionId.PA_BOLZANO not in snap.mortality
        and RegionId.PA_TRENTO not in snap.mortality,
    )
    merged = snap.mortality[RegionId.PA_BOLZANO_TRENTO].weekly(2020, "total")
    out.check("merged table equals provinces 21+22", np.array_equal(merged, trentino))
    return out


def check_curve_identities(snap) -> Outcome:
    out = Outcome()
    worst11 = worst6 = 0.0
    n11 = n6 = 0
    for r in CASE_REGIONS:
        p = snap.panels.get(r)
        if p is None or p.tests_cum is None:
            continue
        c2 = build_curve(CurveKind.ConfirmedOverTests, p).as_dict()
        c11 = build_curve(CurveKind.LogConfirmedMinusLogTestsCumulative, p).as_dict()
        for x in set(c2) & set(c11):
            worst11 = max(worst11, abs(c11[x] - math.log(c2[x])))
            n11 += 1
        m = mortality_region(r)
        if m is None or m not in snap.mortality:
            continue
        table = snap.mortality[m]
        base = build_baseline(table)
        c6 = build_curve(CurveKind.CovidFracWeeklyDeaths, p, table, base).as_dict()
        c7 = build_curve(CurveKind.CovidFracWeeklyDeathsWrtPast, p, table, base).as_dict()
        c8 = build_curve(CurveKind.Deaths2020WrtPast, p, table, base).as_dict()
        for x in set(c6) & set(c7) & set(c8):
            if c8[x] != 0:
                worst6 = max(worst6, abs(c6[x] - c7[x] / c8[x]))
                n6 += 1
    out.check(f"curve 11 = ln(curve 2) at {n11} points, max err {worst11:.1e}", n11 > 0 and worst11 <= 1e-12)
    out.check(f"curve 6 = curve 7 / curve 8 at {n6} points, max err {worst6:.1e}", n6 > 0 and worst6 <= 1e-12)
    return out


def check_anomalies(snap, cfg) -> Outcome:
    out = Outcome()
    flags = {r: detect_anomalies(snap.panels[r]) for r in CASE_REGIONS if r in snap.panels}
    over = [(r, f.date) for r, fs in flags.items() for f in fs if f.kind == "fraction_exceeds_one"]
    out.check(f"{len(over)} fraction_exceeds_one day(s)", len(over) >= 1)
    for r in (RegionId.BASILICATA, RegionId.CALABRIA):
        days = [f.date.isoformat() for f in flags.get(r, []) if f.kind == "zero_tests_spike"]
        out.check(f"{r} zero-test spikes {days}", bool(days))
    er = snap.panels[RegionId.EMILIA_ROMAGNA]
    view, _ = apply_exclusions(er, cfg.rules_for(RegionId.EMILIA_ROMAGNA), False, "daily_regression")
    removed = len(er) - len(view)
    out.check(f"Emilia-Romagna 28-30 Mar rule removes {removed} point(s)", removed == 3)
    return out

"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error.
Every command validates its inputs and computes its results before the
first output file is written.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from . import __version__
from .analysis import analyze_region, caption, fits_to_csv, summary_to_csv
from .config import SCALES, ConfigError, RunConfig, load_config, parse_regions
from .core import EpiPanel, MortalityTable
from .curves import (
    COUNT_KINDS,
    MORTALITY_KINDS,
    RATIO_KINDS,
    CurveKind,
    CurveSeries,
    MissingInputError,
    PartialRollupError,
    build_baseline,
    build_curve,
    curves_to_csv,
    national_mortality_rollup,
    national_rollup,
    peak_summary,
    raw_death_toll_curves,
)
from .ingest import (
    MappingError,
    ParseError,
    Snapshot,
    SnapshotError,
    ingest_files,
    load_mapping,
    load_snapshot,
    save_snapshot,
)
from .ingest.fetch import DEFAULT_URLS, fetch
from .quality import (
    QualityReport,
    apply_exclusions,
    detect_anomalies,
    reports_to_csv,
)
from .regions import RegionId, UnknownRegionError, mortality_region

log = logging.getLogger("epipanel")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _slug(region: RegionId) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", region.value).strip("_")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")


def _write_effective(cfg: RunConfig, out: Path) -> None:
    _write(out / "effective_config.yaml", yaml.safe_dump(cfg.effective(), sort_keys=True, allow_unicode=True))


def _map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- shared loading -----------------------------------------------------------


def _config(args, need_snapshot: bool = True) -> RunConfig:
    overrides = {"scale": args.scale, "workers": args.workers}
    kinds = ()
    if getattr(args, "kind", None):
        try:
            kinds = tuple(
                CurveKind.parse(k.strip()).name for spec in args.kind for k in spec.split(",") if k.strip()
            )
        except ValueError as e:
            raise ConfigError(str(e)) from None
    cfg = load_config(
        args.config,
        overrides,
        snapshot=None if args.snapshot is None else Path(args.snapshot),
        regions=parse_regions(args.regions),
        out=Path(args.out),
        seed=args.seed,
        kinds=kinds,
    )
    return cfg.validate(need_snapshot)


def _panels(snap: Snapshot, regions: Sequence[RegionId]) -> dict[RegionId, EpiPanel]:
    out = {}
    for r in regions:
        if r is RegionId.ITALY and r not in snap.panels:
            try:
                out[r] = national_rollup({k: v for k, v in snap.panels.items()})
            except PartialRollupError as e:
                raise DataError(str(e)) from None
        elif r in snap.panels:
            out[r] = snap.panels[r]
        else:
            raise DataError(f"region {r} is not in snapshot {snap.source_id}")
    return out


def _mortality_for(snap: Snapshot, region: RegionId) -> tuple[MortalityTable | None, str | None]:
    """The all-cause table for ``region`` or a notice saying why none applies."""
    if region is RegionId.ITALY:
        if RegionId.ITALY in snap.mortality:
            return snap.mortality[RegionId.ITALY], None
        if not snap.mortality:
            return None, "no mortality data in snapshot"
        try:
            return national_mortality_rollup(snap.mortality), None
        except PartialRollupError as e:
            return None, str(e)
    target = mortality_region(region)
    if target is None:
        if region in (RegionId.PA_BOLZANO, RegionId.PA_TRENTO):
            return None, (
                f"mortality is reported jointly as {RegionId.PA_BOLZANO_TRENTO.value}; "
                "curves scaled by population death tolls are not presented"
            )
        return None, "no mortality data for this series"
    if target not in snap.mortality:
        return None, "no mortality data for region"
    return snap.mortality[target], None


# -- commands -----------------------------------------------------------------


def cmd_ingest(args) -> int:
    out = Path(args.snapshot) if args.snapshot else None
    if out is None:
        raise ConfigError("ingest needs --snapshot (the directory to create)")
    if out.exists():
        raise ConfigError(f"{out} exists; snapshots are never overwritten")
    if not args.source:
        raise ConfigError("ingest needs at least one --source MAPPING=PATH")
    pairs = []
    for spec in args.source:
        name, _, where = spec.partition("=")
        mapping = load_mapping(name)
        if args.fetch:
            url = where or DEFAULT_URLS.get(name)
            if not url:
                raise ConfigError(f"--fetch: no URL known for {name}; give {name}=URL")
            pairs.append((mapping, url))
        else:
            if not where:
                raise ConfigError(f"--source {spec}: expected MAPPING=PATH")
            if not Path(where).is_file():
                raise ConfigError(f"source file {where} does not exist")
            pairs.append((mapping, where))

    if args.fetch:
        snap = fetch({m.source_id: (url, m) for m, url in pairs}, workers=args.workers or 1)
    else:
        snap = ingest_files([(p, m) for m, p in pairs])
    save_snapshot(snap, out)
    print((out / "manifest.json").read_text("utf-8"), end="")
    return EXIT_OK


def _quality_reports(cfg: RunConfig, panels: dict[RegionId, EpiPanel]) -> list[QualityReport]:
    def one(panel: EpiPanel) -> QualityReport:
        rep = QualityReport(panel.region, flags=detect_anomalies(panel))
        if panel.region in cfg.ineligible:
            rep.notes.append(f"regression_ineligible: {cfg.ineligible[panel.region]}")
        rules = cfg.rules_for(panel.region)
        if panel.tests_cum is not None:
            apply_exclusions(panel, rules, cfg.auto_drop_zero_tests, "daily_regression", rep)
        return rep

    return _map(one, list(panels.values()), cfg.workers)


def cmd_quality(args) -> int:
    cfg = _config(args)
    snap = load_snapshot(cfg.snapshot)
    panels = _panels(snap, cfg.regions)
    reports = _quality_reports(cfg, panels)

    out = cfg.out / "quality"
    _write(out / "quality_report.csv", reports_to_csv(reports))
    _write(out / "quality_report.txt", "\n\n".join(r.to_text() for r in reports) + "\n")
    _write_effective(cfg, cfg.out)
    n = sum(len(r.flags) for r in reports)
    print(f"quality: {n} flag(s) across {len(reports)} region(s); report in {out}")
    return EXIT_OK


def run_regress(cfg: RunConfig, snap: Snapshot):
    panels = _panels(snap, cfg.regions)
    return _map(lambda p: analyze_region(p, cfg), list(panels.values()), cfg.workers)


def cmd_regress(args, charts: bool = True) -> int:
    cfg = _config(args)
    snap = load_snapshot(cfg.snapshot)
    results = run_regress(cfg, snap)

    out = cfg.out / "regress"
    captions = [caption(r) for r in results]
    _write(out / "fits.csv", fits_to_csv(results))
    _write(out / "summary.csv", summary_to_csv(results))
    _write(out / "removals.csv", reports_to_csv(r.report for r in results))
    _write(out / "captions.txt", "\n\n".join(captions) + "\n")
    _write_effective(cfg, cfg.out)
    if charts:
        from .charts import regression_chart

        for r in results:
            regression_chart(r, out / "charts" / f"{_slug(r.region)}.svg")
    for r, text in zip(results, captions):
        if r.skipped:
            print(f"notice: {text}", file=sys.stderr)
        else:
            print(text)
    return EXIT_OK


def _region_curves(cfg: RunConfig, snap: Snapshot, panel: EpiPanel, kinds: set[CurveKind]):
    """(curves, raw toll curves, notices) for one region."""
    region = panel.region
    curves: list[CurveSeries] = []
    notices: list[str] = []
    has_tests = panel.tests_cum is not None
    view = None
    if has_tests:
        view, _ = apply_exclusions(panel, cfg.rules_for(region), False, "all_curves")
    for kind in (CurveKind.ConfirmedOverTests, *COUNT_KINDS, CurveKind.LogConfirmedMinusLogTestsCumulative):
        if kind not in kinds:
            continue
        if not has_tests and kind is not CurveKind.ConfirmedDaily:
            notices.append(f"{region}: {kind.name} skipped (no test counts)")
            continue
        curves.append(build_curve(kind, panel, view=view if kind is CurveKind.LogConfirmedMinusLogTestsDaily else None))

    toll = {}
    wanted_mortality = [k for k in CurveKind if k in MORTALITY_KINDS and k in kinds]
    if wanted_mortality or CurveKind.RawWeeklyDeathToll in kinds:
        table, why = _mortality_for(snap, region)
        if table is None:
            notices.append(f"{region}: death-ratio curves skipped ({why})")
        else:
            if wanted_mortality:
                try:
                    base = build_baseline(table)
                    for kind in wanted_mortality:
                        curves.append(build_curve(kind, panel, table, base))
                except (MissingInputError, ValueError) as e:
                    notices.append(f"{region}: death-ratio curves skipped ({e})")
            if CurveKind.RawWeeklyDeathToll in kinds:
                toll[None] = raw_death_toll_curves(table)
                for band in table.age_bands:
                    toll[band] = raw_death_toll_curves(table, "total", band)
    return curves, toll, notices


def run_curves(cfg: RunConfig, snap: Snapshot):
    kinds = {CurveKind[k] for k in cfg.kinds} if cfg.kinds else set(CurveKind)
    panels = _panels(snap, cfg.regions)
    dp = None
    if CurveKind.DPConfirmedScaled in kinds:
        dp_panel = snap.panels.get(RegionId.DIAMOND_PRINCESS)
        if dp_panel is not None:
            dp = build_curve(CurveKind.DPConfirmedScaled, dp_panel)
    per_region = _map(
        lambda p: _region_curves(cfg, snap, p, kinds),
        [p for r, p in panels.items() if r is not RegionId.DIAMOND_PRINCESS],
        cfg.workers,
    )
    return panels, dp, per_region


def _peaks_csv(rows) -> str:
    lines = ["region,age_band,year,winter_max,spring_max"]
    for region, band, ps in rows:
        for year in sorted(ps.winter_max):
            lines.append(f"{region},{band},{year},{ps.winter_max[year]!r},{ps.spring_max[year]!r}")
    return "\n".join(lines) + "\n"


def cmd_curves(args, charts: bool = True) -> int:
    cfg = _config(args)
    snap = load_snapshot(cfg.snapshot)
    panels, dp, per_region = run_curves(cfg, snap)
    wants_dp = not cfg.kinds or CurveKind.DPConfirmedScaled.name in cfg.kinds
    if wants_dp and dp is None:
        print("notice: no Diamond Princess panel in snapshot; overlay omitted", file=sys.stderr)

    table: list[CurveSeries] = [dp] if dp is not None else []
    toll_rows: list[CurveSeries] = []
    peaks = []
    notices = []
    for curves, toll, note in per_region:
        table.extend(curves)
        notices.extend(note)
        for band, by_year in toll.items():
            toll_rows.extend(by_year[y] for y in sorted(by_year))
            if by_year:
                region = next(iter(by_year.values())).region
                peaks.append((region, band or "all", peak_summary(by_year)))

    out = cfg.out / "curves"
    _write(out / "curves.csv", curves_to_csv(table))
    if toll_rows:
        _write(out / "death_toll.csv", curves_to_csv(toll_rows))
        _write(out / "peaks.csv", _peaks_csv(peaks))
    _write(out / "notices.txt", "".join(n + "\n" for n in notices))
    _write_effective(cfg, cfg.out)

    if charts:
        from .charts import curves_chart, death_toll_chart

        overlay = [dp] if dp is not None else []
        for (curves, toll, _), region in zip(per_region, [r for r in panels if r is not RegionId.DIAMOND_PRINCESS]):
            ratio = [c for c in curves if c.kind in RATIO_KINDS]
            counts = [c for c in curves if c.kind in COUNT_KINDS]
            slug = _slug(region)
            if ratio or overlay:
                curves_chart(f"{region}: ratio curves", ratio + overlay, out / "charts" / f"{slug}_ratios.svg", cfg.scale)
            if counts:
                curves_chart(f"{region}: daily counts", counts, out / "charts" / f"{slug}_counts.svg", cfg.scale)
            if None in toll:
                death_toll_chart(f"{region}: weekly deaths, all ages", toll[None], out / "charts" / f"{slug}_deaths.svg")
    for n in notices:
        print(f"notice: {n}", file=sys.stderr)
    regions = sorted({str(c.region) for c in table})
    print(f"curves: {len(table)} curve(s) for {len(regions)} region(s) in {out}")
    return EXIT_OK


def cmd_all(args) -> int:
    for step in (cmd_quality, cmd_regress, cmd_curves):
        code = step(args)
        if code:
            return code
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Monte-Carlo coverage of the slope interval and the prediction band."""
    from .regress import ols_fit, prediction_band

    rng = np.random.default_rng(args.seed)
    trials, n = args.trials, 20
    t = np.arange(n, dtype=np.float64)
    hit_ci = hit_band = 0
    for _ in range(trials):
        y = 0.5 - 0.05 * t + rng.normal(0.0, 0.3, n)
        fit = ols_fit(t, y)
        lo, hi = fit.slope_ci_95
        hit_ci += lo <= -0.05 <= hi
        t0 = rng.uniform(0, n - 1)
        y0 = 0.5 - 0.05 * t0 + rng.normal(0.0, 0.3)
        blo, bhi = prediction_band(fit, np.array([t0]))
        hit_band += bool(blo[0] <= y0 <= bhi[0])
    ci, band = hit_ci / trials, hit_band / trials
    print(json.dumps({"seed": args.seed, "trials": trials, "slope_ci_coverage": ci, "band_coverage": band}))
    return EXIT_OK if abs(band - 0.95) <= 0.01 and abs(ci - 0.95) <= 0.01 else EXIT_DATA


# -- argument parsing ---------------------------------------------------------


def _common(p: argparse.ArgumentParser, *, snapshot_help: str = "snapshot directory to analyse") -> None:
    p.add_argument("--snapshot", help=snapshot_help)
    p.add_argument("--regions", default="all", help="comma-separated region names, or 'all' (default)")
    p.add_argument("--config", help="YAML file overriding the built-in defaults")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--scale", choices=SCALES, default=None, help="chart y-axis scale")
    p.add_argument("--seed", type=int, default=0, help="seed for Monte-Carlo self-tests")
    p.add_argument("--workers", type=int, default=None, help="regions processed concurrently")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epipanel", description="Regional epidemic panels: ingest, quality, trends, curves.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse source files into a new snapshot")
    _common(p, snapshot_help="snapshot directory to create")
    p.add_argument(
        "--source",
        action="append",
        default=[],
        metavar="MAPPING=PATH",
        help="mapping (built-in id or YAML file) and the file it describes; repeatable",
    )
    p.add_argument("--fetch", action="store_true", help="download sources instead of reading files")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("quality", help="anomaly report")
    _common(p)
    p.set_defaults(func=cmd_quality)

    p = sub.add_parser("regress", help="log-linear trends, half-lives and change points")
    _common(p)
    p.add_argument("--no-charts", action="store_true")
    p.set_defaults(func=lambda a: cmd_regress(a, charts=not a.no_charts))

    p = sub.add_parser("curves", help="comparison curves")
    _common(p)
    p.add_argument("--kind", action="append", help="curve kind(s) to build, comma separated; repeatable")
    p.add_argument("--no-charts", action="store_true")
    p.set_defaults(func=lambda a: cmd_curves(a, charts=not a.no_charts))

    p = sub.add_parser("all", help="quality, regress and curves in one run")
    _common(p)
    p.set_defaults(func=cmd_all, no_charts=False, kind=None)

    p = sub.add_parser("selftest", help="Monte-Carlo coverage check of the intervals")
    _common(p)
    p.add_argument("--trials", type=int, default=10000)
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MappingError, UnknownRegionError) as e:
        print(f"epipanel: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, SnapshotError, DataError, MissingInputError, PartialRollupError) as e:
        print(f"epipanel: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"epipanel: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

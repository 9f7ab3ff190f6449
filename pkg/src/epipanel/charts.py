"""Static SVG charts.

Figures are built on :class:`matplotlib.figure.Figure` directly (no pyplot
state). The SVG hash salt is fixed and the date metadata suppressed, so
the same inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Mapping

import matplotlib
import numpy as np
from matplotlib import dates as mdates
from matplotlib.figure import Figure

from .analysis import SERIES_KINDS, RegionAnalysis
from .curves import LEGEND, CurveSeries
from .regress import prediction_band

_SALT = "epipanel"
_TITLES = {
    "daily_fraction": "log daily confirmed - log daily tests",
    "daily_confirmed": "log daily confirmed",
    "daily_tests": "log daily tests",
    "cumulative_fraction": "log cumulative confirmed - log cumulative tests",
}


def _save(fig: Figure, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": _SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _date_axis(ax) -> None:
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%d %b"))
    for label in ax.get_xticklabels():
        label.set_rotation(30)
        label.set_horizontalalignment("right")


def regression_chart(res: RegionAnalysis, path: str | Path) -> Path | None:
    """Data, fitted line and 95% prediction band for each fitted series."""
    kinds = [k for k in SERIES_KINDS if k in res.fits]
    if not kinds:
        return None
    fig = Figure(figsize=(10, 7.5))
    fig.subplots_adjust(left=0.07, right=0.98, bottom=0.09, top=0.91, hspace=0.4, wspace=0.2)
    axes = fig.subplots(2, 2).ravel()
    start = np.datetime64(res.start_date, "D")
    for ax, kind in zip(axes, SERIES_KINDS):
        sf = res.fits.get(kind)
        if sf is None:
            ax.set_axis_off()
            continue
        tt = np.linspace(sf.t.min(), sf.t.max(), 200)
        lo, hi = prediction_band(sf.fit, tt)
        xd = start + np.round(tt).astype("timedelta64[D]")
        ax.fill_between(xd, lo, hi, color="tab:blue", alpha=0.15, lw=0, label="95% prediction band")
        ax.plot(xd, sf.fit.predict(tt), color="tab:blue", lw=1.5, label=f"a = {sf.fit.slope:.3f}")
        ax.plot(sf.dates, sf.y, "o", ms=3, color="black", label="data")
        ax.set_title(_TITLES[kind], fontsize=9)
        ax.legend(fontsize=7, loc="best")
        _date_axis(ax)
    fig.suptitle(f"{res.region}: regression from {res.start_date}", fontsize=11)
    return _save(fig, path)


def _draw_curves(ax, curves: Iterable[CurveSeries], log: bool) -> None:
    for c in curves:
        x = np.array(c.x_dates(), dtype="datetime64[D]")
        y = c.y
        if log:
            pos = y > 0
            x, y = x[pos], y[pos]
            if y.size == 0:
                continue
        style = "--" if c.kind.name == "DPConfirmedScaled" else "-"
        ax.plot(x, y, style, lw=1.2, marker=".", ms=3, label=LEGEND[c.kind] + (f" {c.label}" if c.label else ""))
    if log:
        ax.set_yscale("log")
    ax.grid(True, lw=0.3, alpha=0.5)
    _date_axis(ax)


def curves_chart(
    title: str,
    curves: list[CurveSeries],
    path: str | Path,
    scale: str = "both",
) -> Path | None:
    """Overlay of curves; ``both`` puts a linear panel left of a log one."""
    if not curves:
        return None
    panels = ("linear", "log") if scale == "both" else (scale,)
    fig = Figure(figsize=(6.5 * len(panels), 5.5))
    fig.subplots_adjust(left=0.08 / len(panels), right=0.98, bottom=0.3, top=0.88, wspace=0.2)
    axes = np.atleast_1d(fig.subplots(1, len(panels)))
    for ax, mode in zip(axes, panels):
        _draw_curves(ax, curves, mode == "log")
        ax.set_title(f"{mode} scale", fontsize=9)
    handles, labels = axes[0].get_legend_handles_labels()
    fig.legend(handles, labels, loc="lower center", ncol=3, fontsize=7)
    fig.suptitle(title, fontsize=11)
    return _save(fig, path)


def death_toll_chart(title: str, curves: Mapping[int, CurveSeries], path: str | Path) -> Path | None:
    """Weekly deaths per year on a shared week-of-year axis."""
    if not curves:
        return None
    fig = Figure(figsize=(7, 4.5))
    fig.subplots_adjust(left=0.11, right=0.97, bottom=0.13, top=0.9)
    ax = fig.subplots()
    for year, c in sorted(curves.items()):
        weeks = [x.week_index for x in c.x]
        style = dict(color="black", lw=2.0) if year == 2020 else dict(lw=1.0, alpha=0.8)
        ax.plot(weeks, c.y, marker=".", ms=3, label=str(year), **style)
    ax.set_xlabel("week of year (7-day blocks from 1 January)")
    ax.set_ylabel("deaths per week")
    ax.grid(True, lw=0.3, alpha=0.5)
    ax.legend(fontsize=7)
    ax.set_title(title, fontsize=10)
    return _save(fig, path)

"""Detection of reporting pathologies and the exclusion rules applied before
regression.

Nothing here mutates a panel. Exclusions produce an :class:`AnalysisView`
(a boolean mask over the panel's dates) and every removed date is logged
once in a :class:`QualityReport`.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import CUMULATIVE_FIELDS, EpiPanel, daily_from_cumulative, to_date
from .regions import RegionId

FLAG_KINDS = ("fraction_exceeds_one", "zero_tests_spike", "cumulative_decrease", "missing_day")
RULE_SCOPES = ("daily_regression", "all_curves")


@dataclass(frozen=True, order=True)
class AnomalyFlag:
    date: dt.date
    kind: str
    region: RegionId
    detail: str = ""


@dataclass(frozen=True)
class ExclusionRule:
    region: RegionId
    dates: frozenset[dt.date]
    reason: str
    applies_to: str = "daily_regression"

    def __post_init__(self):
        object.__setattr__(self, "region", RegionId(self.region))
        object.__setattr__(self, "dates", frozenset(to_date(np.datetime64(d, "D")) for d in self.dates))
        if self.applies_to not in RULE_SCOPES:
            raise ValueError(f"applies_to must be one of {RULE_SCOPES}")

    def covers(self, scope: str) -> bool:
        return self.applies_to == "all_curves" or self.applies_to == scope


@dataclass(frozen=True)
class Removal:
    date: dt.date
    scope: str
    reason: str


@dataclass
class QualityReport:
    region: RegionId
    flags: list[AnomalyFlag] = field(default_factory=list)
    removals: list[Removal] = field(default_factory=list)
    start_date: dt.date | None = None
    start_policy: str | None = None
    notes: list[str] = field(default_factory=list)

    def removed(self, scope: str | None = None) -> list[dt.date]:
        return [r.date for r in self.removals if scope is None or r.scope == scope]

    def record(self, date: dt.date, scope: str, reason: str) -> None:
        if any(r.date == date and r.scope == scope for r in self.removals):
            return
        self.removals.append(Removal(date, scope, reason))

    def rows(self) -> list[tuple[str, str, str, str, str]]:
        """(region, date, entry, kind, detail) rows in a stable order."""
        out = []
        if self.start_date is not None:
            out.append((str(self.region), self.start_date.isoformat(), "start", self.start_policy or "", ""))
        for f in sorted(self.flags):
            out.append((str(self.region), f.date.isoformat(), "flag", f.kind, f.detail))
        for r in sorted(self.removals, key=lambda r: (r.scope, r.date)):
            out.append((str(self.region), r.date.isoformat(), "removal", r.scope, r.reason))
        for note in self.notes:
            out.append((str(self.region), "", "note", "", note))
        return out

    def to_text(self) -> str:
        lines = [f"== {self.region}"]
        if self.start_date is not None:
            lines.append(f"regression start: {self.start_date} ({self.start_policy})")
        if not self.flags and not self.removals:
            lines.append("no findings")
        for f in sorted(self.flags):
            lines.append(f"  [{f.kind}] {f.date}: {f.detail}")
        for r in sorted(self.removals, key=lambda r: (r.scope, r.date)):
            lines.append(f"  removed from {r.scope}: {r.date} ({r.reason})")
        lines.extend(f"  note: {n}" for n in self.notes)
        return "\n".join(lines)


REPORT_COLUMNS = ("region", "date", "entry", "kind", "detail")


def reports_to_csv(reports: Iterable[QualityReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for rep in reports:
        w.writerows(rep.rows())
    return buf.getvalue()


# -- detection ----------------------------------------------------------------


def detect_anomalies(panel: EpiPanel) -> list[AnomalyFlag]:
    """Flag the known pathologies of the official series.

    Returned flags are sorted, so the output does not depend on how the
    panel was assembled.
    """
    flags: list[AnomalyFlag] = []
    region = panel.region
    dates = [to_date(d) for d in panel.dates]

    for gap in panel.gaps:
        flags.append(AnomalyFlag(to_date(gap), "missing_day", region, "no row for this date"))

    for name in CUMULATIVE_FIELDS:
        values = getattr(panel, name)
        if values is None:
            continue
        for i in np.flatnonzero(np.diff(values) < 0) + 1:
            flags.append(
                AnomalyFlag(
                    dates[i],
                    "cumulative_decrease",
                    region,
                    f"{name} fell from {values[i - 1]} to {values[i]}",
                )
            )

    if panel.tests_cum is not None:
        conf = daily_from_cumulative(panel.confirmed_cum)
        tests = daily_from_cumulative(panel.tests_cum)
        for i in np.flatnonzero((tests > 0) & (conf > tests)):
            flags.append(
                AnomalyFlag(
                    dates[i],
                    "fraction_exceeds_one",
                    region,
                    f"daily confirmed {conf[i]} > daily tests {tests[i]}",
                )
            )
        flags.extend(_zero_test_spikes(region, dates, tests))

    return sorted(set(flags))


def _zero_test_spikes(region, dates, tests: np.ndarray) -> list[AnomalyFlag]:
    out = []
    n = len(tests)
    i = 0
    while i < n:
        if tests[i] != 0:
            i += 1
            continue
        j = i
        while j + 1 < n and tests[j + 1] == 0:
            j += 1
        if i > 0 and j < n - 1 and tests[i - 1] > 0 and tests[j + 1] > 0:
            ctx = (
                f"daily tests 0 between {tests[i - 1]} on {dates[i - 1]} "
                f"and {tests[j + 1]} on {dates[j + 1]}"
            )
            out.extend(AnomalyFlag(dates[k], "zero_tests_spike", region, ctx) for k in range(i, j + 1))
        i = j + 1
    return out


# -- exclusions ---------------------------------------------------------------


class RuleRegionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AnalysisView:
    """A panel seen through a date mask.

    Daily values are differenced on the full panel first and masked after,
    so a removed date never leaks its increment into a neighbour.
    """

    panel: EpiPanel
    mask: np.ndarray
    scope: str = "daily_regression"

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.panel.dates.shape:
            raise ValueError("mask does not match panel dates")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def region(self) -> RegionId:
        return self.panel.region

    @property
    def dates(self) -> np.ndarray:
        return self.panel.dates[self.mask]

    def daily(self, name: str) -> np.ndarray:
        return daily_from_cumulative(self.panel.field(name))[self.mask]

    def cumulative(self, name: str) -> np.ndarray:
        return self.panel.field(name)[self.mask]

    def __len__(self) -> int:
        return int(self.mask.sum())

    def is_identity(self) -> bool:
        return bool(self.mask.all())


def apply_exclusions(
    panel: EpiPanel,
    rules: Sequence[ExclusionRule] = (),
    auto_drop_zero_tests: bool = True,
    scope: str = "daily_regression",
    report: QualityReport | None = None,
) -> tuple[AnalysisView, QualityReport]:
    """Mask the dates the rules (and, optionally, zero-test days) exclude."""
    report = report if report is not None else QualityReport(panel.region)
    mask = np.ones(len(panel), dtype=bool)
    dates = [to_date(d) for d in panel.dates]
    index = {d: i for i, d in enumerate(dates)}
    for rule in rules:
        if rule.region != panel.region:
            raise RuleRegionError(f"rule for {rule.region} applied to panel {panel.region}")
        if not rule.covers(scope):
            continue
        for d in sorted(rule.dates):
            i = index.get(d)
            if i is None:
                report.notes.append(f"exclusion date {d} not in panel ({rule.reason})")
                continue
            if mask[i]:
                mask[i] = False
                report.record(d, scope, rule.reason)
    if auto_drop_zero_tests and scope == "daily_regression" and panel.tests_cum is not None:
        tests = daily_from_cumulative(panel.tests_cum)
        for i in np.flatnonzero(tests <= 0):
            if mask[i]:
                mask[i] = False
                what = "zero" if tests[i] == 0 else "negative"
                report.record(dates[i], scope, f"{what} daily tests")
    return AnalysisView(panel, mask, scope), report


# -- regression start ---------------------------------------------------------


@dataclass(frozen=True)
class FirstDeath:
    name = "first_death"


@dataclass(frozen=True)
class Explicit:
    date: dt.date
    name = "explicit"


@dataclass(frozen=True)
class TestFloor:
    """First day opening a run of ``run`` days with at least ``floor`` tests."""

    floor: int = 100
    run: int = 3
    name = "test_floor"


@dataclass(frozen=True)
class AfterChangePoint:
    """Start at the change point of the daily log positive fraction."""

    min_segment: int = 5
    name = "after_change_point"


StartPolicy = FirstDeath | Explicit | TestFloor | AfterChangePoint


class StartDateError(ValueError):
    pass


def regression_start(
    panel: EpiPanel,
    policy: StartPolicy,
    report: QualityReport | None = None,
    view: AnalysisView | None = None,
) -> dt.date:
    """First date of the regression window for ``panel`` under ``policy``."""
    dates = [to_date(d) for d in panel.dates]
    if isinstance(policy, FirstDeath):
        hit = np.flatnonzero(panel.deaths_cum > 0)
        if hit.size == 0:
            raise StartDateError(f"{panel.region}: no deaths recorded")
        start = dates[int(hit[0])]
        label = "first_death"
    elif isinstance(policy, Explicit):
        start = to_date(np.datetime64(policy.date, "D"))
        if start not in dates:
            raise StartDateError(f"{panel.region}: explicit start {start} outside panel coverage")
        label = f"explicit({start})"
    elif isinstance(policy, TestFloor):
        tests = daily_from_cumulative(panel.field("tests_cum"))
        ok = tests >= policy.floor
        start = None
        for i in range(len(ok) - policy.run + 1):
            if ok[i : i + policy.run].all():
                start = dates[i]
                break
        if start is None:
            raise StartDateError(
                f"{panel.region}: daily tests never reach {policy.floor} for {policy.run} days"
            )
        label = f"test_floor({policy.floor},{policy.run})"
    elif isinstance(policy, AfterChangePoint):
        start = _change_point_start(panel, policy, view)
        label = f"after_change_point({policy.min_segment})"
    else:
        raise TypeError(f"unknown start policy {policy!r}")
    if report is not None:
        report.start_date = start
        report.start_policy = label
    return start


def _change_point_start(panel: EpiPanel, policy: AfterChangePoint, view: AnalysisView | None) -> dt.date:
    from .regress import change_point

    first = regression_start(panel, FirstDeath())
    if view is None:
        view, _ = apply_exclusions(panel, (), auto_drop_zero_tests=True)
    conf = view.daily("confirmed_cum")
    tests = view.daily("tests_cum")
    d = view.dates
    keep = (conf > 0) & (tests > 0) & (d >= np.datetime64(first, "D"))
    if keep.sum() < 2 * policy.min_segment + 1:
        raise StartDateError(f"{panel.region}: too few usable days for a change point")
    d = d[keep]
    y = np.log(conf[keep]) - np.log(tests[keep])
    t = (d - d[0]).astype(np.float64)
    cp = change_point(t, y, policy.min_segment, dates=d)
    return cp.break_date


def policy_from_config(spec) -> StartPolicy:
    """Build a policy from a config value such as ``"first_death"``,
    ``{"explicit": "2020-03-20"}`` or ``{"test_floor": {"floor": 100}}``."""
    if isinstance(spec, str):
        spec = {spec: {}}
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValueError(f"bad start policy {spec!r}")
    (name, args), = spec.items()
    if name == "first_death":
        return FirstDeath()
    if name == "explicit":
        return Explicit(to_date(np.datetime64(str(args), "D")))
    if name == "test_floor":
        return TestFloor(**(args or {}))
    if name == "after_change_point":
        return AfterChangePoint(**(args or {}))
    raise ValueError(f"unknown start policy {name!r}")

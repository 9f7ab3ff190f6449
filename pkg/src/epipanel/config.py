"""Run configuration: built-in defaults < config file < command-line flags."""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .quality import ExclusionRule, StartPolicy, policy_from_config
from .regions import CASE_REGIONS, RegionId, UnknownRegionError

SCALES = ("linear", "log", "both")


class ConfigError(ValueError):
    pass


def builtin_config(name: str = "default") -> dict:
    text = resources.files(__package__).joinpath("configs", f"{name}.yaml").read_text("utf-8")
    return yaml.safe_load(text) or {}


def _merge(base: dict, override: Mapping) -> dict:
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping) and k not in ("start_policy",):
            out[k] = _merge(dict(out[k]), v)
        else:
            out[k] = v
    return out


def _region(text: str) -> RegionId:
    try:
        return RegionId.parse(str(text))
    except UnknownRegionError as e:
        raise ConfigError(str(e)) from None


def parse_regions(text: str | None) -> tuple[RegionId, ...]:
    """``"all"`` means the 21 case regions; other names are comma separated."""
    if not text:
        return CASE_REGIONS
    out: list[RegionId] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        for r in CASE_REGIONS if part.lower() == "all" else (_region(part),):
            if r not in out:
                out.append(r)
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    snapshot: Path | None = None
    regions: tuple[RegionId, ...] = CASE_REGIONS
    mapping_paths: tuple[Path, ...] = ()
    config_path: Path | None = None
    out: Path = Path("out")
    start_policy: StartPolicy | None = None
    start_overrides: Mapping[RegionId, StartPolicy] = field(default_factory=dict)
    ineligible: Mapping[RegionId, str] = field(default_factory=dict)
    exclusions: tuple[ExclusionRule, ...] = ()
    auto_drop_zero_tests: bool = True
    change_point_min_segment: int = 5
    scale: str = "both"
    seed: int = 0
    workers: int = 1
    kinds: tuple[str, ...] = ()
    raw: Mapping[str, Any] = field(default_factory=dict)

    def policy_for(self, region: RegionId) -> StartPolicy:
        return self.start_overrides.get(region, self.start_policy)

    def rules_for(self, region: RegionId) -> tuple[ExclusionRule, ...]:
        return tuple(r for r in self.exclusions if r.region == region)

    def validate(self, need_snapshot: bool = True) -> "RunConfig":
        """Check every referenced path before any work starts."""
        if need_snapshot:
            if self.snapshot is None:
                raise ConfigError("--snapshot is required")
            if not Path(self.snapshot).is_dir():
                raise ConfigError(f"snapshot {self.snapshot} does not exist")
        for p in self.mapping_paths:
            if not Path(p).is_file():
                raise ConfigError(f"mapping file {p} does not exist")
        if self.config_path is not None and not Path(self.config_path).is_file():
            raise ConfigError(f"config file {self.config_path} does not exist")
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def effective(self) -> dict:
        """Plain-data echo of the configuration for the output directory."""
        return {
            "snapshot": None if self.snapshot is None else str(self.snapshot),
            "regions": [r.value for r in self.regions],
            "config": None if self.config_path is None else str(self.config_path),
            "out": str(self.out),
            "start_policy": self.raw.get("start_policy"),
            "start_overrides": self.raw.get("start_overrides") or {},
            "regression_ineligible": {r.value: why for r, why in self.ineligible.items()},
            "exclusions": [
                {
                    "region": r.region.value,
                    "dates": sorted(d.isoformat() for d in r.dates),
                    "reason": r.reason,
                    "applies_to": r.applies_to,
                }
                for r in self.exclusions
            ],
            "auto_drop_zero_tests": self.auto_drop_zero_tests,
            "change_point_min_segment": self.change_point_min_segment,
            "scale": self.scale,
            "seed": self.seed,
            "workers": self.workers,
            "kinds": list(self.kinds),
        }


def _rules(items) -> tuple[ExclusionRule, ...]:
    out = []
    for item in items or ():
        try:
            dates = [dt.date.fromisoformat(str(d)) for d in item["dates"]]
            out.append(
                ExclusionRule(
                    _region(item["region"]),
                    frozenset(dates),
                    str(item.get("reason", "")),
                    str(item.get("applies_to", "daily_regression")),
                )
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"bad exclusion rule {item!r}: {e}") from None
    return tuple(out)


def load_config(
    config_path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    **fields,
) -> RunConfig:
    """Resolve defaults, the optional YAML file and explicit overrides."""
    data = builtin_config()
    if config_path is not None:
        p = Path(config_path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        loaded = yaml.safe_load(p.read_text("utf-8")) or {}
        if not isinstance(loaded, Mapping):
            raise ConfigError(f"{p}: top level must be a mapping")
        data = _merge(data, loaded)
    data = _merge(data, {k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        policy = policy_from_config(data.get("start_policy", "first_death"))
        start_overrides = {
            _region(k): policy_from_config(v) for k, v in (data.get("start_overrides") or {}).items()
        }
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad start policy: {e}") from None
    ineligible = {_region(k): str(v) for k, v in (data.get("regression_ineligible") or {}).items()}
    return RunConfig(
        config_path=None if config_path is None else Path(config_path),
        start_policy=policy,
        start_overrides=start_overrides,
        ineligible=ineligible,
        exclusions=_rules(data.get("exclusions")),
        auto_drop_zero_tests=bool(data.get("auto_drop_zero_tests", True)),
        change_point_min_segment=int(data.get("change_point_min_segment", 5)),
        scale=str(data.get("scale", "both")),
        workers=int(data.get("workers", 1)),
        raw=data,
        **fields,
    )

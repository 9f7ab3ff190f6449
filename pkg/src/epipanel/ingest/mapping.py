"""Declarative source descriptions.

A mapping file (YAML) names the source columns that feed each canonical
field, how dates are written, how region spellings resolve, and whether a
count column is cumulative or a daily increment. Adding a source is a new
mapping file, not new parsing code.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from ..regions import RegionId, UnknownRegionError

CASE_FIELDS = ("date", "region", "confirmed_cum", "deaths_cum", "tests_cum", "hospitalized")
REQUIRED_CASE_FIELDS = ("date", "region", "confirmed_cum", "deaths_cum", "tests_cum")
MORTALITY_FIELDS = ("region", "municipality", "day", "age_class")
KINDS = ("regional_cases", "mortality", "diamond_princess")
SEMANTICS = ("cumulative", "incremental")

BUILTIN_MAPPINGS = {
    "dpc-regioni": "dpc_regioni.yaml",
    "istat-comuni": "istat_comuni.yaml",
    "hub": "hub.yaml",
    "hub-diamond-princess": "hub_diamond_princess.yaml",
}


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class SchemaMapping:
    source_id: str
    kind: str
    column_map: Mapping[str, str | None]
    date_format: str
    region_aliases: Mapping[str, RegionId] = field(default_factory=dict)
    semantics: Mapping[str, str] = field(default_factory=dict)
    delimiter: str = ","
    encoding: str = "utf-8"
    population: int | None = None
    # mortality sources only
    count_column: str = "{sex}_{yy}"
    sex_codes: Mapping[str, str] = field(default_factory=dict)
    years: tuple[int, ...] = ()
    missing_values: tuple[str, ...] = ()
    cutoff: str = "04-15"
    age_classes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MappingError(f"{self.source_id}: unknown kind {self.kind!r}")
        if len(self.delimiter) != 1:
            raise MappingError(f"{self.source_id}: delimiter must be one character")
        needed = MORTALITY_FIELDS if self.kind == "mortality" else REQUIRED_CASE_FIELDS
        for name in needed:
            if name not in self.column_map:
                raise MappingError(f"{self.source_id}: field {name!r} needs a column or an explicit null")
        allowed = MORTALITY_FIELDS if self.kind == "mortality" else CASE_FIELDS
        extra = set(self.column_map) - set(allowed)
        if extra:
            raise MappingError(f"{self.source_id}: unknown canonical fields {sorted(extra)}")
        if self.kind != "mortality":
            for name in ("date", "confirmed_cum", "deaths_cum"):
                if not self.column_map.get(name):
                    raise MappingError(f"{self.source_id}: field {name!r} cannot be absent")
        for name, sem in self.semantics.items():
            if sem not in SEMANTICS:
                raise MappingError(f"{self.source_id}: semantics for {name} must be one of {SEMANTICS}")
        if self.kind == "mortality":
            if set(self.sex_codes) - {"male", "female", "total"}:
                raise MappingError(f"{self.source_id}: sex_codes keys must be male/female/total")
            bad = [y for y in self.years if not 2015 <= y <= 2020]
            if bad:
                raise MappingError(f"{self.source_id}: years outside 2015-2020: {bad}")

    def column(self, name: str) -> str | None:
        return self.column_map.get(name)

    def semantics_of(self, name: str) -> str:
        return self.semantics.get(name, "cumulative")

    def resolve_region(self, text: str) -> RegionId:
        return RegionId.parse(text, dict(self.region_aliases))

    @classmethod
    def from_dict(cls, d: Mapping) -> "SchemaMapping":
        d = dict(d)
        try:
            source_id = str(d.pop("source_id"))
            kind = d.pop("kind")
            columns = d.pop("columns")
        except KeyError as e:
            raise MappingError(f"mapping lacks key {e.args[0]!r}") from None
        aliases = {}
        for src, target in (d.pop("region_aliases", None) or {}).items():
            try:
                aliases[str(src)] = RegionId.parse(str(target))
            except UnknownRegionError:
                raise MappingError(f"{source_id}: alias {src!r} targets unknown region {target!r}") from None
        kwargs = dict(
            source_id=source_id,
            kind=kind,
            column_map={str(k): (None if v is None else str(v)) for k, v in columns.items()},
            date_format=str(d.pop("date_format", "%Y-%m-%d")),
            region_aliases=aliases,
            semantics=dict(d.pop("semantics", None) or {}),
            delimiter=str(d.pop("delimiter", ",")),
            encoding=str(d.pop("encoding", "utf-8")),
            population=d.pop("population", None),
            count_column=str(d.pop("count_column", "{sex}_{yy}")),
            sex_codes=dict(d.pop("sex_codes", None) or {}),
            years=tuple(int(y) for y in d.pop("years", None) or ()),
            missing_values=tuple(str(v) for v in d.pop("missing_values", None) or ()),
            cutoff=str(d.pop("cutoff", "04-15")),
            age_classes={str(k): str(v) for k, v in (d.pop("age_classes", None) or {}).items()},
        )
        if d:
            raise MappingError(f"{source_id}: unknown mapping keys {sorted(d)}")
        return cls(**kwargs)


def load_mapping(path_or_name: str | Path) -> SchemaMapping:
    """Load a mapping file, or a built-in mapping by its source id."""
    key = str(path_or_name)
    if key in BUILTIN_MAPPINGS:
        text = resources.files(__package__).joinpath("mappings", BUILTIN_MAPPINGS[key]).read_text("utf-8")
    else:
        p = Path(path_or_name)
        if not p.is_file():
            known = ", ".join(sorted(BUILTIN_MAPPINGS))
            raise MappingError(f"{key}: no such mapping file and not a built-in mapping ({known})")
        text = p.read_text("utf-8")
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise MappingError(f"{key}: mapping must be a YAML mapping")
    return SchemaMapping.from_dict(data)

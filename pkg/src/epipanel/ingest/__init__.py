"""Source harmonization: mapping files, parsers and the snapshot store."""

from __future__ import annotations

from pathlib import Path

from .mapping import MappingError, SchemaMapping, load_mapping
from .parsers import ParseError, parse_diamond_princess, parse_mortality, parse_regional_cases
from .snapshot import (
    ChecksumError,
    Snapshot,
    SnapshotError,
    VersionError,
    build_snapshot,
    load_snapshot,
    merge_snapshots,
    read_manifest,
    save_snapshot,
    utc_now,
)


def parse_source(raw: str | bytes, mapping: SchemaMapping, fetched_at: str | None = None) -> Snapshot:
    """Parse one source into a single-source snapshot."""
    if mapping.kind == "mortality":
        return build_snapshot(mapping.source_id, mortality=parse_mortality(raw, mapping), fetched_at=fetched_at)
    if mapping.kind == "diamond_princess":
        panel = parse_diamond_princess(raw, mapping)
        return build_snapshot(mapping.source_id, panels={panel.region: panel}, fetched_at=fetched_at)
    return build_snapshot(mapping.source_id, panels=parse_regional_cases(raw, mapping), fetched_at=fetched_at)


def ingest_files(pairs: list[tuple[str | Path, SchemaMapping]], fetched_at: str | None = None) -> Snapshot:
    stamp = fetched_at or utc_now()
    parts = [parse_source(Path(p).read_bytes(), m, stamp) for p, m in pairs]
    return merge_snapshots(parts, fetched_at=stamp)


__all__ = [
    "ChecksumError",
    "MappingError",
    "ParseError",
    "SchemaMapping",
    "Snapshot",
    "SnapshotError",
    "VersionError",
    "build_snapshot",
    "ingest_files",
    "load_mapping",
    "load_snapshot",
    "merge_snapshots",
    "parse_diamond_princess",
    "parse_mortality",
    "parse_regional_cases",
    "parse_source",
    "read_manifest",
    "save_snapshot",
]

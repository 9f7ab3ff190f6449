"""Optional network capture. Everything else in the package runs offline
from snapshots written here."""

from __future__ import annotations

import logging
import urllib.request
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping

from .mapping import SchemaMapping
from .snapshot import Snapshot, merge_snapshots, utc_now

log = logging.getLogger(__name__)

# The municipal mortality file is distributed as a zip archive from the ISTAT
# site and has to be downloaded by hand.
DEFAULT_URLS = {
    "dpc-regioni": "https://raw.githubusercontent.com/pcm-dpc/COVID-19/master/dati-regioni/dpc-covid19-ita-regioni.csv",
}


def _get(url: str, timeout: float) -> bytes:
    log.info("fetching %s", url)
    with urllib.request.urlopen(url, timeout=timeout) as resp:
        return resp.read()


def fetch(
    sources: Mapping[str, tuple[str, SchemaMapping]],
    *,
    workers: int = 4,
    timeout: float = 60.0,
) -> Snapshot:
    """Download each ``source_id -> (url, mapping)`` and parse it into one
    snapshot. Downloads run concurrently; parsing is sequential."""
    from . import parse_source

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        blobs = {sid: pool.submit(_get, url, timeout) for sid, (url, _) in sources.items()}
        raw = {sid: fut.result() for sid, fut in blobs.items()}
    stamp = utc_now()
    parts = [parse_source(raw[sid], mapping, fetched_at=stamp) for sid, (_, mapping) in sources.items()]
    return merge_snapshots(parts, fetched_at=stamp)

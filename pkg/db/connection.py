"""
Lumen — Opened-database cache.

Loading a sentence DB reads every embedding file and rebuilds the flat
indices, so each directory is opened once per process and shared. The DB
is frozen after load, which makes the shared instance safe to read from
any thread.
"""

from __future__ import annotations

import logging
import os
import threading
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Union

from db.operations import SentenceDB, load_database

logger = logging.getLogger(__name__)

_CACHE_MAX_ENTRIES = max(1, int(os.environ.get("DB_CACHE_MAX_ENTRIES", "4")))

# ── Cache (module-level singleton) ───────────────────────────────────────────

_cache_lock = threading.Lock()
_cache: dict[str, SentenceDB] = {}


def reset_db_cache() -> None:
    """Drop every cached database. Tests call this between cases."""
    with _cache_lock:
        _cache.clear()


def open_db(directory: Union[str, Path]) -> SentenceDB:
    """Return the cached DB for ``directory``, loading it on first use."""
    key = str(Path(directory).resolve())
    with _cache_lock:
        cached = _cache.get(key)
        if cached is not None:
            return cached
        db = load_database(key)
        if len(_cache) >= _CACHE_MAX_ENTRIES:
            oldest = next(iter(_cache))
            _cache.pop(oldest, None)
        _cache[key] = db
        logger.info("Opened sentence DB at %s (%d sentences)", key, len(db.records))
        return db


@contextmanager
def get_db(directory: Union[str, Path]) -> Iterator[SentenceDB]:
    """Context manager form used by the CLI commands."""
    yield open_db(directory)

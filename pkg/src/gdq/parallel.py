"""Ordered parallel map over patches, capped by the GDQ_THREADS env var."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def thread_count() -> int:
    """Worker cap from GDQ_THREADS; defaults to 1 (serial)."""
    raw = os.environ.get("GDQ_THREADS", "").strip()
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def parallel_map(fn, items) -> list:
    """Map ``fn`` over ``items`` preserving order; threads when GDQ_THREADS > 1.

    Results are collected by index, so outputs never depend on scheduling.
    """
    items = list(items)
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))

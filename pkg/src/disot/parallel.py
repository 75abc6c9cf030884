"""Optional thread pool for the embarrassingly parallel per-fiber solves.

Concurrency is capped by the DOT_NUM_THREADS environment variable; unset or 1
means serial execution.  Results are collected in input order, so outputs are
identical regardless of schedule.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get("DOT_NUM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def fiber_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    workers = thread_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))

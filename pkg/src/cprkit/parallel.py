"""Worker-pool plumbing for row-parallel kernels.

Kernels split row ranges with :func:`chunk_ranges` (a pure function of the
row count and worker count) and run one task per chunk on a shared thread
pool.  Tasks write to disjoint output slices, so scheduling order never
affects results; only PGS-NO makes the chunk boundaries part of its operator
definition.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

_MAX_WORKERS = max(16, (os.cpu_count() or 1))
_pool: ThreadPoolExecutor | None = None
_pool_lock = threading.Lock()


def _get_pool() -> ThreadPoolExecutor:
    global _pool
    if _pool is None:
        with _pool_lock:
            if _pool is None:
                _pool = ThreadPoolExecutor(max_workers=_MAX_WORKERS,
                                           thread_name_prefix="cprkit-worker")
    return _pool


def chunk_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    """Split range(n) into up to ``workers`` contiguous near-equal chunks.

    Deterministic in (n, workers); the first ``n % w`` chunks carry one extra
    row.  Empty input gives no chunks.
    """
    if n <= 0:
        return []
    w = max(1, min(int(workers), n))
    base, rem = divmod(n, w)
    ranges = []
    start = 0
    for i in range(w):
        stop = start + base + (1 if i < rem else 0)
        ranges.append((start, stop))
        start = stop
    return ranges


def run_chunks(fn: Callable[[int, int], None], ranges: list[tuple[int, int]]) -> None:
    """Run fn(start, stop) for every chunk, threaded when there is more than one."""
    if not ranges:
        return
    if len(ranges) == 1:
        fn(*ranges[0])
        return
    futures = [_get_pool().submit(fn, s, e) for s, e in ranges]
    for fut in futures:
        fut.result()

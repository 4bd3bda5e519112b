"""Worker-count policy and fixed-order blocked reductions.

Partial results are always formed over the same row blocks and summed in
block order, so the value of a reduction never depends on how many threads
evaluated the blocks.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

ENV_VAR = "ANNULUS_MIN_THREADS"
BLOCK_ROWS = 16


def worker_count(requested: int | None = None) -> int:
    n = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(ENV_VAR)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"{ENV_VAR} must be an integer, got {cap!r}") from None
    return max(1, int(n))


@lru_cache(maxsize=8)
def _executor(n: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=n, thread_name_prefix="annulus-min")


def row_blocks(n_rows: int, block: int = BLOCK_ROWS) -> list[slice]:
    return [slice(a, min(a + block, n_rows)) for a in range(0, n_rows, block)]


def blocked_sum(func, n_rows: int, workers: int | None = None) -> float:
    """Evaluate ``func(rows)`` on fixed row blocks and add the parts in order."""
    blocks = row_blocks(n_rows)
    n = worker_count(workers)
    if n > 1 and len(blocks) > 1:
        parts = list(_executor(n).map(func, blocks))
    else:
        parts = [func(b) for b in blocks]
    total = 0.0
    for p in parts:
        total += float(p)
    return total

"""Deterministic chunked parallelism.

Work is split into index ranges; results are merged in range order, so the
output is independent of the worker count.  Threads suffice because the
hot kernels release the GIL (compiled backend) or spend their time in
numpy (fallback).
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    env = os.environ.get("FWSPDE_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def split_ranges(n: int, pieces: int):
    """Split range(n) into at most ``pieces`` contiguous ranges."""
    pieces = max(1, min(pieces, n)) if n else 0
    bounds = [n * i // pieces for i in range(pieces + 1)] if pieces else [0]
    return [(bounds[i], bounds[i + 1]) for i in range(len(bounds) - 1)
            if bounds[i + 1] > bounds[i]]


def run_chunked(fn, n: int, threads: int = 1, chunks_per_thread: int = 4):
    """Apply fn(lo, hi) over a split of range(n); results in range order."""
    ranges = split_ranges(n, max(1, threads) * chunks_per_thread)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(lo, hi) for lo, hi in ranges]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in ranges]
        return [f.result() for f in futures]

"""Deterministic chunked parallel map over index ranges.

Worker count never changes results: every item is computed independently
and reassembled in index order, so outputs are byte-identical for any
schedule. Used by grid sampling, sweeps, and ensemble integration.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

WORKERS_ENV_VAR = "WIRETRAP_WORKERS"


def resolve_workers(workers: int | None) -> int:
    """Explicit argument wins, then the environment variable, then 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def chunk_ranges(n_items: int, n_chunks: int) -> list[tuple[int, int]]:
    """Split [0, n_items) into at most n_chunks contiguous ranges."""
    n_chunks = max(1, min(n_chunks, n_items)) if n_items else 1
    edges = np.linspace(0, n_items, n_chunks + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def map_index_chunks(fn, n_items: int, workers: int = 1, chunks_per_worker: int = 4):
    """Apply fn(start, stop) over contiguous chunks; concatenate in index order.

    fn must return one ndarray (or tuple of ndarrays) whose leading axis is
    stop - start. fn and its closure must be picklable when workers > 1.
    """
    workers = max(1, workers)
    if n_items == 0 or workers == 1:
        return fn(0, n_items)
    ranges = chunk_ranges(n_items, workers * chunks_per_worker)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, *zip(*ranges)))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)

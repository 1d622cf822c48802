"""Deterministic replication fan-out.

Replications are processed in fixed-size chunks; chunk ``c`` covers
replication indices ``[c*chunk_size, min((c+1)*chunk_size, total))`` and all
randomness inside a chunk derives from substreams keyed by the replication
index (or the chunk index for fully vectorized kernels), never from the
worker that happened to execute it.  Partial results are re-assembled in
chunk order, so the merged output is bit-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

DEFAULT_CHUNK_SIZE = 512


def resolve_workers(workers: int | None) -> int:
    """Explicit value, else the VOTERDYN_WORKERS environment fallback, else 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("VOTERDYN_WORKERS")
    return max(1, int(env)) if env else 1


def chunk_bounds(total: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]


def run_chunked(
    chunk_fn: Callable[..., np.ndarray],
    payload: Any,
    total: int,
    seed: int,
    workers: int | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
) -> np.ndarray:
    """Evaluate ``chunk_fn(payload, start, stop, seed)`` over all chunks.

    ``chunk_fn`` must be a module-level function (it is pickled for worker
    processes) returning one array row per replication; rows are concatenated
    in chunk order.
    """
    workers = resolve_workers(workers)
    bounds = chunk_bounds(total, chunk_size)
    if workers == 1 or len(bounds) == 1:
        parts = [chunk_fn(payload, start, stop, seed) for start, stop in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(chunk_fn, payload, start, stop, seed) for start, stop in bounds]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)


def pairwise_sum(values: Sequence[np.ndarray] | np.ndarray, axis: int = 0) -> np.ndarray:
    """Cascade summation (numpy's pairwise reduction) in a fixed order."""
    arr = np.asarray(values)
    return np.sum(arr, axis=axis)

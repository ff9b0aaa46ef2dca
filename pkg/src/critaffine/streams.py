"""Counter-based random stream derivation and an order-preserving parallel map.

Replica ``i`` of a task keyed ``key`` always receives the generator
``PCG64(SeedSequence(master_seed, spawn_key=key + (i,)))``, so results do
not depend on how replicas are distributed over workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_SEED = 2**64


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError("seed must be an integer")
    seed = int(seed)
    if not 0 <= seed < MAX_SEED:
        raise ValueError("seed must lie in [0, 2**64)")
    return seed


def seed_sequence(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))


def replica_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, key...)``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))


def parallel_map(fn: Callable, items: Sequence, workers: int = 1, chunksize: int | None = None) -> list:
    """``[fn(x) for x in items]``, optionally over a process pool.

    Output order follows ``items`` whatever the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    if chunksize is None:
        chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def indexed(seed: int, key: Iterable[int], n: int, *extra) -> list[tuple]:
    """Task tuples ``(seed, key, i, *extra)`` for replicas ``0..n-1``."""
    key = tuple(key)
    return [(seed, key, i) + tuple(extra) for i in range(n)]

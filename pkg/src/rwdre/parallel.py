"""Deterministic replica scheduling.

Workers pull replica ids from a fixed queue and results are returned keyed by
replica id, so output never depends on the worker count.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

R = TypeVar("R")


def replica_map(fn: Callable[[int], R], replicas: Iterable[int], workers: int = 1) -> list[R]:
    ids = list(replicas)
    if workers <= 1 or len(ids) <= 1:
        return [fn(r) for r in ids]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map preserves input order regardless of completion order
        return list(pool.map(fn, ids, chunksize=max(1, len(ids) // (4 * workers))))

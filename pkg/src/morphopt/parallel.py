"""Data-parallel population evaluation.

Evaluations are pure functions of (genome, seed), so populations can be
fanned out to worker processes and merged in submission order; strategy
state stays with the single coordinating process.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

__all__ = ["PopulationMap", "default_workers"]


def default_workers() -> int:
    return os.cpu_count() or 1


def _call_pair(pair):
    fn, item = pair
    return fn(item)


class PopulationMap:
    """map_fn for the optimizers; serial when workers <= 1."""

    def __init__(self, workers: int = 1):
        self.workers = max(1, int(workers))
        self._pool = None

    def __enter__(self):
        if self.workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, *exc):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
        return False

    def __call__(self, fn, items):
        items = list(items)
        if self._pool is None:
            return [fn(x) for x in items]
        return list(self._pool.map(_call_pair, [(fn, x) for x in items], chunksize=1))

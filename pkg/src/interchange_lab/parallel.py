"""Replicate-block fan-out with results independent of the worker count."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable

from .rng import StreamKey, block_keys


def _call(job):
    func, size, key, args = job
    return func(size, key, *args)


def run_blocks(func: Callable, key: StreamKey, reps: int, block: int, workers: int = 1, args: tuple = ()) -> list:
    """Evaluate ``func(size, block_key, *args)`` on every fixed-size replicate block.

    Results come back in block order whatever the number of workers, and each
    block draws only from its own key, so the output is bit-identical for any
    ``workers``.  ``func`` must be a module-level function when ``workers > 1``.
    """
    jobs = [(func, size, k, args) for _, size, k in block_keys(key, reps, block)]
    if workers <= 1 or len(jobs) <= 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))

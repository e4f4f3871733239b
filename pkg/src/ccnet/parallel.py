"""Deterministic trial execution, serial or across worker processes.

Every Monte Carlo trial is a pure function of (master seed, trial index),
so results are identical for any worker count; the scheduler only changes
who computes what.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

ENV_WORKERS = "CCNET_WORKERS"


def resolve_workers(workers=None) -> int:
    """Explicit argument, else the CCNET_WORKERS env var, else cpu count."""
    if workers is not None:
        if workers < 1:
            raise ValueError("workers must be >= 1")
        return int(workers)
    env = os.environ.get(ENV_WORKERS)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_trials(n: int, fn, workers: int = 1, chunksize: int | None = None) -> list:
    """[fn(0), ..., fn(n-1)] in index order, fanned out if workers > 1."""
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    if chunksize is None:
        chunksize = max(1, n // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n), chunksize=chunksize))

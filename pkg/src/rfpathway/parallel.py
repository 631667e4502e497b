"""Order-preserving fan-out of independent jobs over worker processes."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence


def _call(args):
    fn, job = args
    return fn(*job)


def run_jobs(fn: Callable, jobs: Sequence[tuple], workers: int = 1) -> list:
    """``[fn(*job) for job in jobs]``, optionally across processes.

    Results come back in job order, and each job seeds its own random
    stream, so the worker count never changes the output.
    """
    if workers <= 1 or len(jobs) <= 1:
        return [fn(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, [(fn, job) for job in jobs], chunksize=1))

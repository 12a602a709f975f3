"""Order-preserving map over worker processes.

The worker count comes from the argument, else ``INFSERV_WORKERS``, else 1.
Results are returned in job order, so output never depends on scheduling.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get("INFSERV_WORKERS", "1"))
    return max(1, workers)


def parallel_map(fn, jobs, workers: int | None = None) -> list:
    jobs = list(jobs)
    w = min(worker_count(workers), len(jobs))
    if w <= 1:
        return [fn(j) for j in jobs]
    chunksize = max(1, len(jobs) // (4 * w))
    with ProcessPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, jobs, chunksize=chunksize))

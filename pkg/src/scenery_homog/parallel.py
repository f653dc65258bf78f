"""Order-preserving map over work items, serial or in worker processes.

Every work item carries its own RNG stream, so results never depend on the
number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

ENV_WORKERS = "SCENERY_HOMOG_WORKERS"


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = os.environ.get(ENV_WORKERS, 1)
    workers = int(workers)
    return max(1, workers)


def pmap(fn, items, workers=None):
    """``[fn(*item) for item in items]`` with optional process parallelism."""
    items = list(items)
    n = resolve_workers(workers)
    if n == 1 or len(items) <= 1:
        return [fn(*item) for item in items]
    with ProcessPoolExecutor(max_workers=min(n, len(items))) as ex:
        return list(ex.map(fn, *zip(*items)))

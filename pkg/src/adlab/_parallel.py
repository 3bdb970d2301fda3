"""Worker-count policy: ADLAB_THREADS caps the pool size."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count() -> int:
    cap = os.environ.get("ADLAB_THREADS")
    workers = os.cpu_count() or 1
    if cap is not None:
        workers = max(1, min(workers, int(cap)))
    return workers


def indexed_map(func, items: list):
    """Map preserving input order; threads only when they can help."""
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))

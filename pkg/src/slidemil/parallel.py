"""Thread control: BLAS pinning for small-matrix loops, worker-pool mapping."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager, nullcontext

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover - ships with scikit-learn
    threadpool_limits = None


@contextmanager
def single_thread_blas():
    """Limit BLAS pools to one thread.

    The training loops multiply many tiny matrices; letting OpenBLAS fan out
    across cores makes them several times slower, so hot loops run pinned.
    """
    ctx = threadpool_limits(limits=1, user_api="blas") if threadpool_limits else nullcontext()
    with ctx:
        yield


def map_ordered(fn, items, threads: int = 1) -> list:
    """Order-preserving map with an optional thread pool."""
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))

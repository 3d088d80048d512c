"""Thread helpers for elementwise image work.

numpy ufuncs release the GIL, so band-splitting purely per-pixel work
across a thread pool scales on multicore hosts while producing output
that is bitwise independent of the thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

__all__ = ["run_row_bands", "run_chunks"]


def run_row_bands(height: int, n_threads: int, fn) -> None:
    """Call ``fn(y0, y1)`` over row bands covering [0, height).

    With ``n_threads <= 1`` this is a single direct call. Bands must only
    perform per-pixel work on their own rows; under that contract the
    result does not depend on the banding.
    """
    n_threads = max(1, int(n_threads))
    if n_threads == 1 or height <= 1:
        fn(0, height)
        return
    n_bands = min(n_threads, height)
    step = -(-height // n_bands)
    bounds = [(y, min(y + step, height)) for y in range(0, height, step)]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [pool.submit(fn, y0, y1) for y0, y1 in bounds]
        for f in futures:
            f.result()


def run_chunks(n_items: int, n_threads: int, fn) -> None:
    """Call ``fn(i0, i1)`` over contiguous index chunks of [0, n_items).

    Used where each item needs a full-image reduction; every item's
    result is computed by exactly one call, so the output is independent
    of the chunking.
    """
    n_threads = max(1, int(n_threads))
    if n_threads == 1 or n_items <= 1:
        fn(0, n_items)
        return
    n_chunks = min(n_threads, n_items)
    step = -(-n_items // n_chunks)
    bounds = [(i, min(i + step, n_items)) for i in range(0, n_items, step)]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [pool.submit(fn, i0, i1) for i0, i1 in bounds]
        for f in futures:
            f.result()

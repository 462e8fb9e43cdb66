"""Static partitioning of agent arrays over a thread pool.

Kernels release the GIL under numba, so threads give real parallelism there;
under the numpy fallback they still run correctly, just serially.
"""
from concurrent.futures import ThreadPoolExecutor


def partition(n: int, workers: int) -> list[tuple[int, int]]:
    workers = max(1, min(int(workers), n)) if n else 1
    base, extra = divmod(n, workers)
    out = []
    lo = 0
    for w in range(workers):
        hi = lo + base + (1 if w < extra else 0)
        out.append((lo, hi))
        lo = hi
    return out


def map_chunks(fn, chunks, pool: ThreadPoolExecutor | None):
    """Apply ``fn`` to every chunk, preserving chunk order in the results."""
    if pool is None or len(chunks) == 1:
        return [fn(c) for c in chunks]
    return list(pool.map(fn, chunks))


def make_pool(workers: int) -> ThreadPoolExecutor | None:
    return ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

"""Order-preserving parallel map with a deterministic serial fallback.

Work items must be pure functions of their arguments; results are collected
in submission order, so output is identical at any worker count.
"""

from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, jobs=1):
    items = list(items)
    if jobs is None or jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (8 * jobs))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))

"""Process-wide worker-count cap and an order-preserving parallel map.

Work is always split into chunks whose boundaries depend only on the
problem size, and chunk results are combined in chunk order, so every
computation in this library returns bit-identical results for any
worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

_max_threads = 1


def set_max_threads(n: int) -> None:
    """Cap the number of worker threads library operations may use."""
    global _max_threads
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    _max_threads = int(n)


def get_max_threads() -> int:
    return _max_threads


def parallel_map(fn, items):
    """Map ``fn`` over ``items``, preserving input order in the result."""
    items = list(items)
    workers = min(_max_threads, len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunk_sizes(n_items: int, chunk: int) -> list[int]:
    """Split ``n_items`` into runs of at most ``chunk``, last one short."""
    if n_items < 0 or chunk < 1:
        raise ValueError("need n_items >= 0 and chunk >= 1")
    sizes = [chunk] * (n_items // chunk)
    if n_items % chunk:
        sizes.append(n_items % chunk)
    return sizes

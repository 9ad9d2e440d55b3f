from concurrent.futures import ProcessPoolExecutor


def parallel_map(fn, items, workers: int = 1):
    """Order-preserving map; a process pool when ``workers > 1``.

    ``fn`` must be a module-level function so it can be pickled.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))

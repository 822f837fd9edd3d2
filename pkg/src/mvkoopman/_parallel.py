import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

# rows per work item; fixed so results never depend on the thread count
CHUNK_ROWS = 8192


def resolve_threads(threads=None) -> int:
    """Explicit value, else ``MVK_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("MVK_THREADS")
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return threads


def row_chunks(n: int, chunk=None):
    chunk = CHUNK_ROWS if chunk is None else chunk
    return [(a, min(a + chunk, n)) for a in range(0, n, chunk)]


def map_rows(fn, n: int, threads: int = 1, chunk=None):
    """Apply ``fn(start, stop)`` over fixed row chunks and stack the results.

    ``fn`` must be row-local: output row i depends on input row i only.
    """
    chunks = row_chunks(n, chunk)
    if threads <= 1 or len(chunks) == 1:
        parts = [fn(a, b) for a, b in chunks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), chunks))
    return np.concatenate(parts, axis=0)


def tree_sum(parts):
    """Pairwise sum in a fixed order, independent of how parts were produced."""
    parts = list(parts)
    if not parts:
        raise ValueError("nothing to sum")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]

"""Counter-derived random streams.

Replicates are generated in fixed-size blocks.  Block ``k`` of grid point
``g`` always draws from the stream keyed by ``(seed, g, k)``, so the output
does not depend on how many worker threads process the blocks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

BLOCK_SIZE = 256


def stream(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def run_blocks(
    n: int,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    seed: int,
    grid: int = 0,
    threads: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Stack ``draw(rng, count)`` over the blocks covering ``n`` replicates."""
    starts = list(range(0, n, block_size))

    def job(k):
        count = min(block_size, n - starts[k])
        return np.asarray(draw(stream(seed, grid, k), count))

    if threads <= 1 or len(starts) <= 1:
        parts = [job(k) for k in range(len(starts))]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(starts))))
    if not parts:
        return np.empty((0,))
    return np.concatenate(parts, axis=0)

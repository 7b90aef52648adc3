"""Counter-based Gaussian streams and the deterministic block engine.

Every draw is a pure function of ``(seed, stream, path index, knot index)``:
paths are grouped into fixed blocks of ``BLOCK_PATHS`` and block ``b`` reads a
Philox generator keyed by ``(seed, stream)`` with counter offset ``b``.  The
block size never depends on the worker count, so results are bit-identical for
any pool size.  Per-block results are concatenated in block order before any
reduction.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List

import numpy as np

from .core import MonteCarloConfig

BLOCK_PATHS = 2048

STREAM_ENDPOINT_BRIDGE = 1
STREAM_INTEGRAL_BRIDGE = 2
STREAM_FORWARD = 3

THREADS_ENV = "DEGENDENS_THREADS"


def default_workers() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        value = int(raw)
    except ValueError:
        return 1
    return max(1, value)


def block_generator(seed: int, stream: int, block: int) -> np.random.Generator:
    bit_gen = np.random.Philox(key=[seed, stream], counter=[0, 0, 0, block])
    return np.random.Generator(bit_gen)


def block_normals(
    seed: int, stream: int, block: int, count: int, shape: tuple, antithetic: bool
) -> np.ndarray:
    """Standard normals of shape ``(count, *shape)`` for one block.

    With ``antithetic`` the odd paths are the negation of the preceding even path.
    """
    gen = block_generator(seed, stream, block)
    if not antithetic:
        return gen.standard_normal((count, *shape))
    half = (count + 1) // 2
    base = gen.standard_normal((half, *shape))
    out = np.empty((2 * half, *shape))
    out[0::2] = base
    out[1::2] = -base
    return out[:count]


def block_ranges(paths: int) -> List[tuple]:
    """``(block, first_path, count)`` for every block covering ``paths`` paths."""
    return [(b, start, min(BLOCK_PATHS, paths - start)) for b, start in enumerate(range(0, paths, BLOCK_PATHS))]


def map_blocks(fn: Callable[[int, int, int], object], paths: int, workers: int | None = None) -> list:
    """Apply ``fn(block, first_path, count)`` to every block; results are in block order."""
    ranges = block_ranges(paths)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(ranges) == 1:
        return [fn(*r) for r in ranges]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def gaussian_increments(
    mc: MonteCarloConfig, stream: int, block: int, count: int, n: int, dt: float, zero_noise: bool = False
) -> np.ndarray:
    """Brownian increments of shape ``(count, n, steps)`` with variance ``dt``."""
    if zero_noise:
        return np.zeros((count, n, mc.steps))
    z = block_normals(mc.seed, stream, block, count, (n, mc.steps), mc.antithetic)
    z *= np.sqrt(dt)
    return z

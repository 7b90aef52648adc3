import numpy as np
import pytest

from degendens import rng
from degendens.core import MonteCarloConfig


def test_block_ranges_cover_paths():
    ranges = rng.block_ranges(5000)
    assert [r[2] for r in ranges] == [2048, 2048, 904]
    assert ranges[-1][1] == 4096


def test_blocks_are_reproducible_and_distinct():
    a = rng.block_normals(1, 1, 0, 10, (3,), False)
    assert np.array_equal(a, rng.block_normals(1, 1, 0, 10, (3,), False))
    assert not np.array_equal(a, rng.block_normals(1, 1, 1, 10, (3,), False))
    assert not np.array_equal(a, rng.block_normals(1, 2, 0, 10, (3,), False))
    assert not np.array_equal(a, rng.block_normals(2, 1, 0, 10, (3,), False))


def test_antithetic_pairs():
    z = rng.block_normals(5, 1, 0, 7, (2, 4), True)
    assert z.shape == (7, 2, 4)
    assert np.array_equal(z[1::2], -z[0:6:2])


@pytest.mark.parametrize("workers", [2, 4, 8])
def test_map_blocks_order_independent_of_workers(workers):
    fn = lambda b, first, count: rng.block_normals(9, 3, b, count, (2,), True).sum(axis=1)
    ref = np.concatenate(rng.map_blocks(fn, 10_000, 1))
    assert np.array_equal(ref, np.concatenate(rng.map_blocks(fn, 10_000, workers)))


def test_default_workers_env(monkeypatch):
    monkeypatch.setenv(rng.THREADS_ENV, "6")
    assert rng.default_workers() == 6
    monkeypatch.setenv(rng.THREADS_ENV, "junk")
    assert rng.default_workers() == 1
    monkeypatch.delenv(rng.THREADS_ENV)
    assert rng.default_workers() == 1


def test_gaussian_increments_variance_and_zero_noise():
    mc = MonteCarloConfig(paths=2048, steps=8, seed=1, antithetic=False)
    dW = rng.gaussian_increments(mc, 1, 0, 2048, 1, 0.25)
    assert dW.shape == (2048, 1, 8)
    assert abs(dW.var() - 0.25) < 0.02
    assert not rng.gaussian_increments(mc, 1, 0, 16, 1, 0.25, zero_noise=True).any()

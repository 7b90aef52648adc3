"""Forward simulation of the full degenerate process.

The Brownian block moves by exact Gaussian increments on a uniform grid and the
degenerate coordinate integrates the drift by the trapezoidal rule.  It draws
from its own random stream, so forward and bridge runs with one seed are
independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .bridge import trapezoid
from .core import MonteCarloConfig, ProcessSpec, SpacePoint, SpecError, drift_array


@dataclass(frozen=True, eq=False)
class ForwardBatch:
    nondeg: np.ndarray  # (paths, n)
    deg: np.ndarray  # (paths,)
    t: float
    spec: ProcessSpec
    mc: MonteCarloConfig

    @property
    def terminal_points(self) -> list:
        return [SpacePoint(tuple(row), d) for row, d in zip(self.nondeg, self.deg)]

    def __len__(self) -> int:
        return len(self.deg)


@dataclass(frozen=True, eq=False)
class JointTable:
    first_edges: np.ndarray
    deg_edges: np.ndarray
    probabilities: np.ndarray  # (len(first_edges)-1, len(deg_edges)-1)
    overflow: float


def simulate_forward(x0: SpacePoint, t: float, spec: ProcessSpec, mc: MonteCarloConfig,
                     zero_noise: bool = False, workers: int | None = None) -> ForwardBatch:
    if not t > 0:
        raise SpecError(f"horizon t must be > 0, got {t!r}")
    if x0.n != spec.n:
        raise SpecError(f"start point has {x0.n} Brownian coordinates but the process spec has n={spec.n}")
    dt = t / mc.steps
    start = x0.vector

    def run(block, first, count):
        dW = _rng.gaussian_increments(mc, _rng.STREAM_FORWARD, block, count, spec.n, dt, zero_noise)
        path = np.empty((count, spec.n, mc.steps + 1))
        path[..., 0] = 0.0
        np.cumsum(dW, axis=-1, out=path[..., 1:])
        path += start[:, None]
        rise = trapezoid(drift_array(path, spec, axis=-2), dt)
        return np.column_stack([path[..., -1], x0.deg + rise])

    out = np.concatenate(_rng.map_blocks(run, mc.paths, workers))
    return ForwardBatch(out[:, :-1], out[:, -1], t, spec, mc)


def empirical_joint(batch: ForwardBatch, first_edges, deg_edges) -> JointTable:
    """Histogram of (first Brownian coordinate, degenerate coordinate) as cell probabilities."""
    first_edges = np.asarray(first_edges, dtype=float)
    deg_edges = np.asarray(deg_edges, dtype=float)
    if first_edges.size < 2 or deg_edges.size < 2:
        raise SpecError("each axis needs at least two edges")
    if len(batch) == 0:
        raise SpecError("batch is empty")
    counts, _, _ = np.histogram2d(batch.nondeg[:, 0], batch.deg, bins=[first_edges, deg_edges])
    total = len(batch)
    inside = int(counts.sum())
    return JointTable(first_edges, deg_edges, counts / total, (total - inside) / total)


def write_terminal_csv(batch: ForwardBatch, fh) -> None:
    n = batch.nondeg.shape[1]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow([*[f"x{i + 1}" for i in range(n)], "xdeg"])
    for row, d in zip(batch.nondeg, batch.deg):
        writer.writerow([*[repr(float(v)) for v in row], repr(float(d))])

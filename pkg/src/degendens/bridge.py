"""Brownian bridges on a uniform grid and the conditioned functional Y_t.

Conditioning the Brownian block on its endpoints turns the degenerate
coordinate into ``Y_t = int_0^t f(m(u) + W^{0,t}_u) du`` where ``m`` is the
linear interpolation between the two endpoints and ``W^{0,t}`` a bridge pinned
at 0.  Single paths are :class:`BridgePath` values; the Monte Carlo entry point
:func:`simulate_statistic` works on whole blocks of shape ``(paths, n, steps+1)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng as _rng
from .core import MonteCarloConfig, ProcessSpec, SpecError, _as_vector, _check_dim, drift_array, drift_gradient

FORMS = ("endpoint", "integral")


@dataclass(frozen=True, eq=False)
class BridgePath:
    horizon: float
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[None, :]
        if not self.horizon > 0:
            raise SpecError(f"bridge horizon must be > 0, got {self.horizon!r}")
        if values.ndim != 2 or values.shape[1] < 3:
            raise SpecError("bridge values must have shape (n, steps+1) with steps >= 2")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def steps(self) -> int:
        return self.values.shape[1] - 1

    @property
    def knots(self) -> np.ndarray:
        return knots(self.horizon, self.steps)

    def identical(self, other: "BridgePath") -> bool:
        return self.horizon == other.horizon and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class YDecomposition:
    mean_part: float
    gaussian_part: float
    remainder: float
    total: float


def _check_grid(t: float, steps: int) -> None:
    if not t > 0:
        raise SpecError(f"horizon t must be > 0, got {t!r}")
    if int(steps) != steps or steps < 2:
        raise SpecError(f"steps must be an integer >= 2, got {steps!r}")


def knots(t: float, steps: int) -> np.ndarray:
    return t * (np.arange(steps + 1) / steps)


def trapezoid(f: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal rule along the last axis on a uniform grid."""
    return dt * (f[..., 1:-1].sum(axis=-1) + 0.5 * (f[..., 0] + f[..., -1]))


def endpoint_bridges(dW: np.ndarray, t: float) -> np.ndarray:
    """``W_u - (u/t) W_t`` at the knots, from increments of shape ``(..., n, steps)``."""
    steps = dW.shape[-1]
    out = np.zeros((*dW.shape[:-1], steps + 1))
    np.cumsum(dW, axis=-1, out=out[..., 1:])
    frac = np.arange(steps + 1) / steps
    out -= frac * out[..., -1:]
    out[..., 0] = 0.0
    out[..., -1] = 0.0
    return out


def integral_bridges(dW: np.ndarray, t: float) -> np.ndarray:
    """``(t - u) int_0^u dW_s / (t - s)`` at the knots.

    Each increment is rescaled to the exact variance of ``int dW/(t-s)`` over its
    interval, so the knot values carry the bridge law without discretization
    error; the last interval never contributes since its prefactor vanishes.
    """
    steps = dW.shape[-1]
    dt = t / steps
    s = knots(t, steps)
    rem = t - s
    # variance of int_{s_i}^{s_{i+1}} ds/(t-s)^2, for i < steps-1
    var = dt / (rem[:-2] * rem[1:-1])
    J = dW[..., :-1] * np.sqrt(var / dt)
    out = np.zeros((*dW.shape[:-1], steps + 1))
    np.cumsum(J, axis=-1, out=out[..., 1:-1])
    out[..., 1:-1] *= rem[1:-1]
    return out


def bridges_from_increments(dW: np.ndarray, t: float, form: str = "endpoint") -> np.ndarray:
    if form == "endpoint":
        return endpoint_bridges(dW, t)
    if form == "integral":
        return integral_bridges(dW, t)
    raise SpecError(f"unknown bridge form {form!r}; expected one of {FORMS}")


def sample_endpoint_pinned(gen: np.random.Generator, t: float, steps: int, n: int) -> BridgePath:
    _check_grid(t, steps)
    dW = gen.standard_normal((n, steps)) * np.sqrt(t / steps)
    return BridgePath(t, endpoint_bridges(dW, t))


def sample_integral_form(gen: np.random.Generator, t: float, steps: int, n: int) -> BridgePath:
    _check_grid(t, steps)
    dW = gen.standard_normal((n, steps)) * np.sqrt(t / steps)
    return BridgePath(t, integral_bridges(dW, t))


def reverse_time(p: BridgePath) -> BridgePath:
    return BridgePath(p.horizon, p.values[:, ::-1].copy())


def bridge_area(p: BridgePath) -> np.ndarray:
    return trapezoid(p.values, p.horizon / p.steps)


def mean_path(t: float, steps: int, x, xi) -> np.ndarray:
    """``m(u) = x (t-u)/t + xi u/t`` at the knots, shape ``(n, steps+1)``."""
    x, xi = _as_vector(x), _as_vector(xi)
    frac = np.arange(steps + 1) / steps
    return x[:, None] * (1.0 - frac) + xi[:, None] * frac


def _prepare(values: np.ndarray, x, xi, spec: ProcessSpec):
    x, xi = _as_vector(x), _as_vector(xi)
    _check_dim(x, spec, "x")
    _check_dim(xi, spec, "xi")
    if values.shape[-2] != spec.n:
        raise SpecError(f"path has {values.shape[-2]} coordinates but the process spec has n={spec.n}")
    return x, xi


def y_values(values: np.ndarray, t: float, x, xi, spec: ProcessSpec) -> np.ndarray:
    """Y_t for a block of bridges ``(..., n, steps+1)``; returns shape ``(...)``."""
    x, xi = _prepare(values, x, xi, spec)
    steps = values.shape[-1] - 1
    z = values + mean_path(t, steps, x, xi)
    return trapezoid(drift_array(z, spec, axis=-2), t / steps)


def y_decomposition_values(values: np.ndarray, t: float, x, xi, spec: ProcessSpec) -> dict:
    """Mean, Gaussian (first-order) and remainder parts of Y_t for a block of bridges."""
    x, xi = _prepare(values, x, xi, spec)
    steps = values.shape[-1] - 1
    dt = t / steps
    m = mean_path(t, steps, x, xi)
    total = trapezoid(drift_array(values + m, spec, axis=-2), dt)
    mean_part = float(trapezoid(drift_array(m, spec, axis=0), dt))
    # first-order term <grad f(m(u)), W_u>
    grad = drift_gradient(m, spec, axis=0)
    gaussian_part = trapezoid(np.sum(grad * values, axis=-2), dt)
    remainder = total - mean_part - gaussian_part
    return {"mean_part": mean_part, "gaussian_part": gaussian_part, "remainder": remainder, "total": total}


def evaluate_Y(p: BridgePath, x, xi, spec: ProcessSpec) -> float:
    return float(y_values(p.values, p.horizon, x, xi, spec))


def decompose_Y(p: BridgePath, x, xi, spec: ProcessSpec) -> YDecomposition:
    parts = y_decomposition_values(p.values, p.horizon, x, xi, spec)
    return YDecomposition(**{key: float(val) for key, val in parts.items()})


def crossing_probability(values: np.ndarray, t: float, level: float) -> np.ndarray:
    """Probability that the continuous bridge through the knots reaches ``level``.

    Uses the exact crossing probability of a Brownian bridge between two knots,
    ``exp(-2 (level-a)(level-b)/dt)``, so the estimator carries no discrete
    monitoring bias.  ``values`` has shape ``(..., steps+1)`` (one coordinate).
    """
    steps = values.shape[-1] - 1
    dt = t / steps
    gap = level - values
    hit = np.any(gap <= 0, axis=-1)
    prod = np.clip(gap[..., :-1] * gap[..., 1:], 0.0, None)
    with np.errstate(divide="ignore"):
        log_stay = np.sum(np.log1p(-np.exp(-2.0 * prod / dt)), axis=-1)
    return np.where(hit, 1.0, -np.expm1(log_stay))


def simulate_statistic(
    mc: MonteCarloConfig,
    t: float,
    n: int,
    statistic: Callable[[np.ndarray], np.ndarray],
    form: str = "endpoint",
    stream: int | None = None,
    workers: int | None = None,
) -> np.ndarray:
    """Sample ``mc.paths`` bridges block by block and concatenate ``statistic(block)``.

    ``statistic`` receives bridge values of shape ``(count, n, steps+1)`` and
    returns an array whose first axis is ``count``.
    """
    _check_grid(t, mc.steps)
    if form not in FORMS:
        raise SpecError(f"unknown bridge form {form!r}; expected one of {FORMS}")
    if stream is None:
        stream = _rng.STREAM_ENDPOINT_BRIDGE if form == "endpoint" else _rng.STREAM_INTEGRAL_BRIDGE
    dt = t / mc.steps

    def run(block, first, count):
        dW = _rng.gaussian_increments(mc, stream, block, count, n, dt)
        return np.asarray(statistic(bridges_from_increments(dW, t, form)))

    return np.concatenate(_rng.map_blocks(run, mc.paths, workers))


def sample_Y_values(
    t: float, x, xi, spec: ProcessSpec, mc: MonteCarloConfig, form: str = "endpoint",
    stream: int | None = None, workers: int | None = None,
) -> np.ndarray:
    x, xi = _as_vector(x), _as_vector(xi)
    return simulate_statistic(mc, t, spec.n, lambda v: y_values(v, t, x, xi, spec), form, stream, workers)


def write_path_csv(p: BridgePath, fh) -> None:
    """Dump a path as CSV with header ``u,w1,...,wn``, one row per knot."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["u", *[f"w{i + 1}" for i in range(p.n)]])
    for u, row in zip(p.knots, p.values.T):
        writer.writerow([repr(float(u)), *[repr(float(v)) for v in row]])

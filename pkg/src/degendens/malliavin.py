"""Malliavin derivative and covariance of Y_t along bridge paths.

For the conditioned functional ``Y_t = int_0^t f(m(u) + W_u) du`` the derivative
in the direction of the driving noise at time ``s`` is

    D_s Y = 1/(t-s) int_s^t grad f(m(u) + W_u) (t-u) du

and the covariance is ``gamma = int |D_s Y|^2 ds``.  Replacing the path by 0
gives the deterministic profile whose energy ``M_det`` dominates ``gamma`` in the
Gaussian regime; ``R_path`` measures the distance between the two.

The derivative at every knot comes from one reverse cumulative trapezoid of
``grad f * (t-u)``, so a whole profile costs O(steps) per path.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bridge import BridgePath, _prepare, knots, mean_path, simulate_statistic
from .core import MonteCarloConfig, ProcessSpec, SpecError, _as_vector, _check_dim, drift_gradient

GAUSS_NODES = 64

SWEEP_HEADER = ["t", "x", "xi", "k", "M_det", "gamma_mean", "R_mean", "ratio"]


@dataclass(frozen=True)
class CovarianceBreakdown:
    gamma: float
    M_det: float
    R_path: float
    tau: float


def _check_time(s: float, t: float, name: str = "s") -> None:
    if not 0 <= s < t:
        raise SpecError(f"{name} must lie in [0, t) = [0, {t}), got {s!r}")


def _snap(s: float, t: float, steps: int) -> int:
    return min(steps, int(round(s / t * steps)))


def derivative_profile(values: np.ndarray, t: float, x, xi, spec: ProcessSpec) -> np.ndarray:
    """``D_{u_j} Y`` at every knot for a block of bridges ``(..., n, steps+1)``.

    The last knot has an empty integration range and is set to 0.
    """
    x, xi = _prepare(values, x, xi, spec)
    steps = values.shape[-1] - 1
    dt = t / steps
    u = knots(t, steps)
    h = drift_gradient(values + mean_path(t, steps, x, xi), spec, axis=-2) * (t - u)
    seg = 0.5 * dt * (h[..., :-1] + h[..., 1:])
    tail = np.zeros_like(h)
    tail[..., :-1] = np.cumsum(seg[..., ::-1], axis=-1)[..., ::-1]
    tail[..., :-1] /= (t - u)[:-1]
    return tail


def _energy(profile: np.ndarray, t: float, start: int) -> np.ndarray:
    """Trapezoid of ``|profile|^2`` from knot ``start`` to the end."""
    steps = profile.shape[-1] - 1
    sq = np.sum(profile * profile, axis=-2)[..., start:]
    if sq.shape[-1] < 2:
        return np.zeros(sq.shape[:-1])
    dt = t / steps
    return dt * (sq[..., 1:-1].sum(axis=-1) + 0.5 * (sq[..., 0] + sq[..., -1]))


def malliavin_derivative(p: BridgePath, x, xi, spec: ProcessSpec, s: float) -> np.ndarray:
    """``D_s Y`` on one path, with ``s`` snapped to the nearest knot."""
    _check_time(s, p.horizon)
    j = _snap(s, p.horizon, p.steps)
    return derivative_profile(p.values, p.horizon, x, xi, spec)[:, j].copy()


def path_covariance(p: BridgePath, x, xi, spec: ProcessSpec, tau: float = 0.0) -> float:
    _check_time(tau, p.horizon, "tau")
    profile = derivative_profile(p.values, p.horizon, x, xi, spec)
    return float(_energy(profile, p.horizon, _snap(tau, p.horizon, p.steps)))


def _gauss_on(a: float, b: float, nodes: int = GAUSS_NODES):
    z, w = np.polynomial.legendre.leggauss(nodes)
    half = 0.5 * (b - a)
    return a + half * (z + 1.0), half * w


def deterministic_M(t: float, x, xi, spec: ProcessSpec, tau: float = 0.0) -> float:
    """Energy over ``[tau, t]`` of the zero-path derivative, by nested Gauss-Legendre."""
    if not t > 0:
        raise SpecError(f"horizon t must be > 0, got {t!r}")
    _check_time(tau, t, "tau")
    x, xi = _as_vector(x), _as_vector(xi)
    _check_dim(x, spec, "x")
    _check_dim(xi, spec, "xi")
    s_nodes, s_weights = _gauss_on(tau, t)
    z, w = np.polynomial.legendre.leggauss(GAUSS_NODES)
    # inner nodes u in [s, t] for every outer s: shape (S, U)
    half = 0.5 * (t - s_nodes)[:, None]
    u = s_nodes[:, None] + half * (z + 1.0)
    u_weights = half * w
    frac = u / t
    m = x[:, None, None] * (1.0 - frac) + xi[:, None, None] * frac
    grad = drift_gradient(m, spec, axis=0)
    inner = np.sum(grad * (t - u) * u_weights, axis=-1) / (t - s_nodes)
    return float(np.sum(s_weights * np.sum(inner * inner, axis=0)))


def _block_breakdown(values, t, x, xi, spec, start):
    profile = derivative_profile(values, t, x, xi, spec)
    zero = derivative_profile(np.zeros(values.shape[-2:]), t, x, xi, spec)
    gamma = _energy(profile, t, start)
    remainder = _energy(profile - zero, t, start)
    return np.stack([gamma, remainder], axis=-1)


def covariance_breakdown(p: BridgePath, x, xi, spec: ProcessSpec, tau: float = 0.0) -> CovarianceBreakdown:
    _check_time(tau, p.horizon, "tau")
    start = _snap(tau, p.horizon, p.steps)
    gamma, remainder = _block_breakdown(p.values, p.horizon, x, xi, spec, start)
    return CovarianceBreakdown(float(gamma), deterministic_M(p.horizon, x, xi, spec, tau), float(remainder), float(tau))


def sample_covariances(
    t: float, x, xi, spec: ProcessSpec, mc: MonteCarloConfig, tau: float = 0.0, workers: int | None = None
) -> np.ndarray:
    """Per-path ``(gamma, R_path)`` pairs, shape ``(paths, 2)``."""
    _check_time(tau, t, "tau")
    x, xi = _as_vector(x), _as_vector(xi)
    start = _snap(tau, t, mc.steps)
    return simulate_statistic(mc, t, spec.n, lambda v: _block_breakdown(v, t, x, xi, spec, start), workers=workers)


def dominance_probability(
    t: float, x, xi, spec: ProcessSpec, kappa: float, mc: MonteCarloConfig, tau: float = 0.0,
    workers: int | None = None,
):
    """Frequency of ``R_path >= kappa * M_det`` with its standard error."""
    if not kappa >= 0:
        raise SpecError(f"kappa must be >= 0, got {kappa!r}")
    m_det = deterministic_M(t, x, xi, spec, tau)
    if m_det <= 0:
        raise SpecError("deterministic covariance vanishes at this query (e.g. x = xi = 0); dominance is undefined")
    remainder = sample_covariances(t, x, xi, spec, mc, tau, workers)[:, 1]
    p = float(np.mean(remainder >= kappa * m_det))
    return p, math.sqrt(p * (1.0 - p) / len(remainder))


def transport_scale(t: float, x, xi, k: int) -> float:
    """``t^3 (|x|^{2(k-1)} + |xi|^{2(k-1)})``, the size of ``M_det`` up to constants."""
    return t**3 * (np.linalg.norm(_as_vector(x)) ** (2 * (k - 1)) + np.linalg.norm(_as_vector(xi)) ** (2 * (k - 1)))


def sweep_row(t: float, x, xi, spec: ProcessSpec, mc: MonteCarloConfig | None = None, tau: float = 0.0,
              workers: int | None = None) -> dict:
    m_det = deterministic_M(t, x, xi, spec, tau)
    if mc is None:
        gamma_mean = remainder_mean = float("nan")
    else:
        pairs = sample_covariances(t, x, xi, spec, mc, tau, workers)
        gamma_mean, remainder_mean = (float(v) for v in pairs.mean(axis=0))
    scale = transport_scale(t, x, xi, spec.k)
    return {
        "t": float(t),
        "x": [float(v) for v in _as_vector(x)],
        "xi": [float(v) for v in _as_vector(xi)],
        "k": spec.k,
        "M_det": m_det,
        "gamma_mean": gamma_mean,
        "R_mean": remainder_mean,
        "ratio": float(m_det / scale) if scale > 0 else float("nan"),
    }


def write_sweep_csv(rows, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(SWEEP_HEADER)
    for row in rows:
        writer.writerow([
            repr(row["t"]),
            ";".join(repr(v) for v in row["x"]),
            ";".join(repr(v) for v in row["xi"]),
            row["k"],
            *(repr(float(row[key])) for key in SWEEP_HEADER[4:]),
        ])

"""Monte Carlo estimates of the law of Y_t and of the full transition density.

The transition density factorizes as the Gaussian density of the Brownian block
times the density of ``Y_t`` at ``xi_deg - x_deg``.  The second factor is
estimated by a Gaussian kernel smoother over bridge samples of ``Y_t``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import bridge
from .core import (
    Family,
    MonteCarloConfig,
    ProcessSpec,
    SpacePoint,
    SpecError,
    TransitionQuery,
    support_contains,
)

MIN_SAMPLES = 1000
DENSITY_FLOOR = 1e-12
KERNEL_ROUGHNESS = 1.0 / (2.0 * math.sqrt(math.pi))
# kernel contributions beyond this many bandwidths are below 1e-27 and skipped
KERNEL_REACH = 11.0
Z95 = 1.96


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    halfwidth: np.ndarray
    bandwidth: float
    samples_used: int

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
            "halfwidth": self.halfwidth.tolist(),
            "bandwidth": self.bandwidth,
            "samples_used": self.samples_used,
        }


@dataclass(frozen=True)
class TailFit:
    exponent: float
    intercept: float
    r_squared: float
    range_used: tuple

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "range_used": list(self.range_used),
        }


def sample_Y(q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, form: str = "endpoint",
             workers: int | None = None) -> np.ndarray:
    q.check(spec)
    return bridge.sample_Y_values(q.t, q.x, q.xi, spec, mc, form=form, workers=workers)


def silverman_bandwidth(samples: np.ndarray) -> float:
    """``0.9 min(sd, IQR/1.34) N^{-1/5}``; falls back to the nonzero scale, then to a tiny width."""
    samples = np.asarray(samples, dtype=float)
    sd = float(np.std(samples, ddof=1))
    q75, q25 = np.percentile(samples, [75, 25])
    iqr_scale = float(q75 - q25) / 1.34
    positive = [s for s in (sd, iqr_scale) if s > 0]
    if positive:
        scale = min(positive)
    else:
        # all samples equal: keep a point-mass shape at the sample's magnitude
        scale = 1e-6 * max(1.0, abs(float(samples[0])))
    return 0.9 * scale * len(samples) ** -0.2


def estimate_pY(samples, grid, bandwidth: float | None = None) -> DensityEstimate:
    """Gaussian kernel density estimate with pointwise 95% half-widths."""
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    grid = np.asarray(grid, dtype=float).ravel()
    if len(samples) < MIN_SAMPLES:
        raise SpecError(f"density estimation needs at least {MIN_SAMPLES} samples, got {len(samples)}")
    if grid.size == 0:
        raise SpecError("evaluation grid is empty")
    if not np.all(np.isfinite(samples)):
        raise SpecError("samples contain non-finite values")
    h = silverman_bandwidth(samples) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise SpecError(f"bandwidth must be > 0, got {bandwidth!r}")
    count = len(samples)
    lo = np.searchsorted(samples, grid - KERNEL_REACH * h, side="left")
    hi = np.searchsorted(samples, grid + KERNEL_REACH * h, side="right")
    values = np.empty(grid.size)
    for i, (y, a, b) in enumerate(zip(grid, lo, hi)):
        z = (samples[a:b] - y) / h
        values[i] = np.exp(-0.5 * z * z).sum()
    values /= count * h * math.sqrt(2.0 * math.pi)
    halfwidth = Z95 * np.sqrt(values * KERNEL_ROUGHNESS / (count * h))
    unresolved = values < DENSITY_FLOOR
    values[unresolved] = 0.0
    # no sample within a bandwidth: one-sided 95% binomial bound on the window mass
    halfwidth[unresolved] = 3.0 / (count * 2.0 * h)
    return DensityEstimate(grid, values, halfwidth, h, count)


def gaussian_factor(t: float, x, xi) -> float:
    """Density of the Brownian block: ``(2 pi t)^{-n/2} exp(-|xi - x|^2 / 2t)``."""
    diff = np.asarray(xi, dtype=float) - np.asarray(x, dtype=float)
    n = diff.size
    return float((2.0 * math.pi * t) ** (-n / 2) * math.exp(-float(diff @ diff) / (2.0 * t)))


def transition_density(
    q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, at: SpacePoint | None = None,
    bandwidth: float | None = None, form: str = "endpoint", workers: int | None = None,
):
    """``(value, halfwidth)`` of the transition density from ``q.start`` to ``at`` (default ``q.end``)."""
    if at is not None:
        q = TransitionQuery(q.t, q.start, at)
    q.check(spec)
    if not support_contains(q, spec):
        return 0.0, 0.0
    samples = sample_Y(q, spec, mc, form, workers)
    est = estimate_pY(samples, [q.increment], bandwidth)
    factor = gaussian_factor(q.t, q.x, q.xi)
    return float(factor * est.values[0]), float(factor * est.halfwidth[0])


def transition_density_profile(
    q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, deg_values, bandwidth: float | None = None,
    form: str = "endpoint", workers: int | None = None,
):
    """Densities at ``(q.end.nondeg, d)`` for every ``d`` in ``deg_values``, sharing one sample set.

    Returns ``(values, halfwidths, DensityEstimate)``.
    """
    q.check(spec)
    deg_values = np.asarray(deg_values, dtype=float)
    samples = sample_Y(q, spec, mc, form, workers)
    est = estimate_pY(samples, deg_values - q.start.deg, bandwidth)
    factor = gaussian_factor(q.t, q.x, q.xi)
    values, halfwidth = factor * est.values, factor * est.halfwidth
    if not (spec.family is Family.COMPONENT and not spec.even):
        outside = deg_values <= q.start.deg
        values[outside] = 0.0
        halfwidth[outside] = 0.0
    return values, halfwidth, est


def gaussian_k1_oracle(q: TransitionQuery, n: int, variance_scale: float = 1.0) -> float:
    """Exact density of the componentwise k=1 process at ``q.end``.

    ``(W_t, sum_i int_0^t W^i)`` is Gaussian with ``Cov(W^i_t, W^j_t) = t delta_ij``,
    ``Cov(W^i_t, int W) = t^2/2`` and ``Var(sum_i int W^i) = n t^3 / 3``;
    ``variance_scale`` multiplies the whole covariance (2 gives the generator
    without the 1/2 in front of the Laplacian).
    """
    t = q.t
    if q.n != n:
        raise SpecError(f"query has {q.n} Brownian coordinates, expected n={n}")
    cov = np.empty((n + 1, n + 1))
    cov[:n, :n] = t * np.eye(n)
    cov[:n, n] = cov[n, :n] = t * t / 2.0
    cov[n, n] = n * t**3 / 3.0
    mean = np.append(q.x, q.start.deg + t * float(np.sum(q.x)))
    point = np.append(q.xi, q.end.deg)
    return float(stats.multivariate_normal(mean, variance_scale * cov).pdf(point))


def kolmogorov_formula(q: TransitionQuery, n: int) -> float:
    """Closed-form Gaussian density with transport term ``sum_i (x_i + xi_i) t / 2``."""
    t = q.t
    if q.n != n:
        raise SpecError(f"query has {q.n} Brownian coordinates, expected n={n}")
    diff = q.xi - q.x
    transport = float(np.sum(q.x + q.xi)) * t / 2.0
    exponent = 0.25 * float(diff @ diff) / t + 3.0 * (q.increment - transport) ** 2 / t**3
    return math.sqrt(3.0) / ((2.0 * math.pi) ** ((n + 1) / 2) * t ** ((n + 3) / 2)) * math.exp(-exponent)


def _frequency(hits: np.ndarray):
    p = float(np.mean(hits))
    return p, math.sqrt(p * (1.0 - p) / hits.size)


def survival_probability(q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, threshold: float,
                         samples: np.ndarray | None = None, workers: int | None = None):
    """``P[Y_t > threshold]`` with its standard error."""
    if math.isnan(threshold):
        raise SpecError("threshold must not be NaN")
    if threshold == math.inf:
        return 0.0, 0.0
    if samples is None:
        samples = sample_Y(q, spec, mc, workers=workers)
    return _frequency(np.asarray(samples) > threshold)


def small_ball_probability(q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, eps: float,
                           samples: np.ndarray | None = None, workers: int | None = None):
    """``P[Y_t <= eps]`` with its standard error."""
    if not eps > 0:
        raise SpecError(f"eps must be > 0, got {eps!r}")
    if samples is None:
        samples = sample_Y(q, spec, mc, workers=workers)
    return _frequency(np.asarray(samples) <= eps)


def _linear_fit(xs: np.ndarray, ys: np.ndarray):
    if xs.size < 2 or np.ptp(xs) == 0:
        raise SpecError("fit abscissae are degenerate (need at least two distinct values)")
    res = stats.linregress(xs, ys)
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    ss_res = float(np.sum((ys - (res.intercept + res.slope * xs)) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return float(res.slope), float(res.intercept), r2


def fit_tail_exponent(points) -> TailFit:
    """Slope of ``log(-log p)`` against ``log(value)`` over ``(value, log p)`` pairs."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 5 or pts.shape[1] != 2:
        raise SpecError("need at least 5 (value, log_probability) points")
    values, logp = pts[:, 0], pts[:, 1]
    if np.any(values <= 0):
        raise SpecError("values must be > 0 for a log-log fit")
    if np.any(logp >= 0) or not np.all(np.isfinite(logp)):
        raise SpecError("probabilities must lie strictly inside (0, 1)")
    slope, intercept, r2 = _linear_fit(np.log(values), np.log(-logp))
    return TailFit(slope, intercept, r2, (float(values.min()), float(values.max())))


def fit_log_survival(points) -> TailFit:
    """Affine fit of ``log p`` against ``value``; the exponent is the (negative) slope."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 5 or pts.shape[1] != 2:
        raise SpecError("need at least 5 (value, log_probability) points")
    slope, intercept, r2 = _linear_fit(pts[:, 0], pts[:, 1])
    return TailFit(slope, intercept, r2, (float(pts[:, 0].min()), float(pts[:, 0].max())))


def tail_points(samples, lower: float = 0.9, upper: float = 0.999, count: int = 25):
    """``(threshold, log P[Y > threshold])`` at thresholds between two empirical quantiles."""
    samples = np.sort(np.asarray(samples, dtype=float))
    levels = np.linspace(lower, upper, count)
    thresholds = np.quantile(samples, levels)
    surv = 1.0 - np.searchsorted(samples, thresholds, side="right") / samples.size
    keep = surv > 0
    return [(float(y), float(math.log(s))) for y, s in zip(thresholds[keep], surv[keep])]


def small_ball_points(samples, lower: float = 1e-4, upper: float = 1e-1, count: int = 25):
    """``(eps, log P[Y <= eps])`` at eps between two (log-spaced) empirical quantiles."""
    samples = np.sort(np.asarray(samples, dtype=float))
    levels = np.geomspace(lower, upper, count)
    eps = np.quantile(samples, levels)
    prob = np.searchsorted(samples, eps, side="right") / samples.size
    keep = (prob > 0) & (prob < 1) & (eps > 0)
    return [(float(e), float(math.log(p))) for e, p in zip(eps[keep], prob[keep])]


def conditioned_cell_probabilities(
    x0: SpacePoint, t: float, spec: ProcessSpec, mc: MonteCarloConfig, first_edges, deg_edges,
    workers: int | None = None,
) -> np.ndarray:
    """Cell probabilities of ``(X^1_t, X^{n+1}_t)`` from the factorized density (n = 1).

    Each column draws its own ``Y_t`` samples with the column centre as bridge
    endpoint; cells use the midpoint rule ``p(centre) * area``.
    """
    if spec.n != 1:
        raise SpecError("cell probabilities from the factorized density are implemented for n = 1")
    first_edges = np.asarray(first_edges, dtype=float)
    deg_edges = np.asarray(deg_edges, dtype=float)
    if first_edges.size < 2 or deg_edges.size < 2:
        raise SpecError("each axis needs at least two edges")
    first_centres = 0.5 * (first_edges[1:] + first_edges[:-1])
    deg_centres = 0.5 * (deg_edges[1:] + deg_edges[:-1])
    area = np.outer(np.diff(first_edges), np.diff(deg_edges))
    table = np.empty(area.shape)
    for i, c in enumerate(first_centres):
        q = TransitionQuery(t, x0, SpacePoint((c,), x0.deg))
        values, _, _ = transition_density_profile(q, spec, mc, deg_centres, workers=workers)
        table[i] = values
    return table * area


def ks_distance(a, b) -> float:
    return float(stats.ks_2samp(a, b).statistic)


def write_density_csv(est: DensityEstimate, fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["y", "density", "halfwidth"])
    for y, v, h in zip(est.grid, est.values, est.halfwidth):
        writer.writerow([repr(float(y)), repr(float(v)), repr(float(h))])


def density_report(q: TransitionQuery, spec: ProcessSpec, mc: MonteCarloConfig, est: DensityEstimate,
                   fits: dict | None = None) -> str:
    report = {
        "query": q.to_dict(),
        "spec": spec.to_dict(),
        "mc": mc.to_dict(),
        "estimate": est.to_dict(),
        "fits": {name: fit.to_dict() for name, fit in (fits or {}).items()},
    }
    return json.dumps(report, sort_keys=True)

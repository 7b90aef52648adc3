"""Regime classification and two-sided density envelopes.

Three overlapping regimes are distinguished by dimensionless ratios of a query:

* off-diagonal: the degenerate increment deviates from the transport term
  ``c t Psi`` by more than ``Cbar`` Gaussian fluctuations;
* gaussian: it does not, and the Brownian endpoints sit far outside the
  diffusive scale ``sqrt(t)``;
* boundary: the degenerate increment is small against ``t^{1+k/2}``.

Each regime has an envelope ``C^{-1} P exp(-C I_lower) <= p <= C P exp(-I_upper / C)``
with a regime-specific prefactor ``P`` and exponent ``I``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import ProcessSpec, SpecError, TransitionQuery, norm, psi, transport_constant

C_MAX = 1e6
COVERAGE = 0.95
# relative slack when comparing an observation with an envelope edge
EDGE_SLACK = 1e-9


class Regime(str, enum.Enum):
    OFF_DIAGONAL = "off_diagonal"
    GAUSSIAN = "gaussian"
    BOUNDARY = "boundary"

    @classmethod
    def parse(cls, value) -> "Regime":
        aliases = {"i": cls.OFF_DIAGONAL, "ii": cls.GAUSSIAN, "iii": cls.BOUNDARY}
        if isinstance(value, str) and value.lower() in aliases:
            return aliases[value.lower()]
        try:
            return cls(value)
        except ValueError:
            raise SpecError(f"unknown regime {value!r}; use off_diagonal/gaussian/boundary or i/ii/iii") from None


class EnvelopeFitError(RuntimeError):
    """No constant up to the search limit reaches the requested coverage."""


@dataclass(frozen=True)
class RegimeReport:
    off_diagonal: bool
    gaussian: bool
    boundary: bool
    deviation_ratio: float
    scale_ratio: float
    boundary_ratio: float

    @property
    def regimes(self) -> list:
        flags = [(Regime.OFF_DIAGONAL, self.off_diagonal), (Regime.GAUSSIAN, self.gaussian),
                 (Regime.BOUNDARY, self.boundary)]
        return [r for r, on in flags if on]

    @property
    def indeterminate(self) -> bool:
        return not self.regimes

    def to_dict(self) -> dict:
        return {
            "off_diagonal": self.off_diagonal,
            "gaussian": self.gaussian,
            "boundary": self.boundary,
            "indeterminate": self.indeterminate,
            "deviation_ratio": self.deviation_ratio,
            "scale_ratio": self.scale_ratio,
            "boundary_ratio": self.boundary_ratio,
        }


@dataclass(frozen=True)
class BoundEnvelope:
    lower: float
    upper: float
    prefactor: float
    exponent_lower: float
    exponent_upper: float
    regime: Regime

    def contains(self, value: float, slack: float = EDGE_SLACK) -> bool:
        return self.lower * (1 - slack) <= value <= self.upper * (1 + slack)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "prefactor": self.prefactor,
            "exponent_lower": self.exponent_lower,
            "exponent_upper": self.exponent_upper,
            "regime": self.regime.value,
        }


def _norm_powers(q: TransitionQuery, power: int) -> float:
    return norm(q.x) ** power + norm(q.xi) ** power


def _safe_ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else 0.0


def deviation_ratio(q: TransitionQuery, spec: ProcessSpec) -> float:
    k, t = spec.k, q.t
    num = abs(q.increment - transport_constant(k) * t * _norm_powers(q, k))
    return _safe_ratio(num, t**1.5 * _norm_powers(q, k - 1))


def classify_regime(q: TransitionQuery, spec: ProcessSpec, K_large: float = 5.0, Cbar: float = 1.0,
                    K_small: float = 0.1) -> RegimeReport:
    q.check(spec)
    for name, value in (("K_large", K_large), ("Cbar", Cbar), ("K_small", K_small)):
        if not value > 0:
            raise SpecError(f"{name} must be > 0, got {value!r}")
    t, k = q.t, spec.k
    dev = deviation_ratio(q, spec)
    scale = max(norm(q.x), norm(q.xi)) / math.sqrt(t)
    bnd = abs(q.increment) / t ** (1 + k / 2)
    return RegimeReport(
        off_diagonal=dev >= Cbar,
        gaussian=dev <= Cbar and scale >= K_large,
        boundary=bnd <= K_small,
        deviation_ratio=dev,
        scale_ratio=scale,
        boundary_ratio=bnd,
    )


def off_diagonal_exponent(q: TransitionQuery, spec: ProcessSpec, c: float) -> float:
    """``|xi - x|^2 / t + |increment - c Psi t|^{2/k} / t^{1+2/k}``."""
    t, k = q.t, spec.k
    diff = q.xi - q.x
    deviation = abs(q.increment - c * psi(q.x, q.xi, spec) * t)
    return float(diff @ diff) / t + deviation ** (2 / k) / t ** (1 + 2 / k)


def gaussian_exponent(q: TransitionQuery, spec: ProcessSpec) -> float:
    t, k = q.t, spec.k
    diff = q.xi - q.x
    weight = _norm_powers(q, k - 1)
    if weight <= 0:
        raise SpecError("gaussian-regime exponent is undefined when x = xi = 0")
    deviation = q.increment - psi(q.x, q.xi, spec) * t
    ratio = deviation / weight  # divide first so a tiny weight cannot underflow when squared
    return float(diff @ diff) / t + ratio * ratio / t**3


def boundary_exponent(q: TransitionQuery, spec: ProcessSpec) -> float:
    """``(|x|^{2+k} + |xi|^{2+k}) / |increment| + t^{1+2/k} / |increment|^{2/k}``."""
    t, k = q.t, spec.k
    gap = abs(q.increment)
    if gap == 0:
        return math.inf
    return _norm_powers(q, 2 + k) / gap + t ** (1 + 2 / k) / gap ** (2 / k)


def lower_off_diagonal_constant(k: int) -> float:
    return 1.0 / 2 ** (k + 4)


def upper_off_diagonal_constant(k: int) -> float:
    return 2 ** (k - 1) / (k + 1)


def prefactor(q: TransitionQuery, spec: ProcessSpec, regime: Regime, form: str = "standard") -> float:
    """Non-exponential factor of the envelope.

    ``form="unified"`` replaces the off-diagonal and boundary factor
    ``t^{-((n+k)/2+1)}`` by ``t^{-(n+3)/2} / max(|x|^{k-1} + |xi|^{k-1}, t^{(k-1)/2})``.
    """
    regime = Regime.parse(regime)
    t, n, k = q.t, spec.n, spec.k
    if regime is Regime.GAUSSIAN:
        weight = _norm_powers(q, k - 1)
        if weight <= 0:
            raise SpecError("gaussian-regime prefactor is undefined when x = xi = 0")
        return 1.0 / (weight * t ** ((n + 3) / 2))
    if form == "standard":
        return t ** -((n + k) / 2 + 1)
    if form == "unified":
        return t ** (-(n + 3) / 2) / max(_norm_powers(q, k - 1), t ** ((k - 1) / 2))
    raise SpecError(f"unknown prefactor form {form!r}; expected 'standard' or 'unified'")


def exponents(q: TransitionQuery, spec: ProcessSpec, regime: Regime):
    """``(I_lower, I_upper)`` for the regime."""
    regime = Regime.parse(regime)
    if regime is Regime.OFF_DIAGONAL:
        return (off_diagonal_exponent(q, spec, lower_off_diagonal_constant(spec.k)),
                off_diagonal_exponent(q, spec, upper_off_diagonal_constant(spec.k)))
    if regime is Regime.GAUSSIAN:
        value = gaussian_exponent(q, spec)
    else:
        value = boundary_exponent(q, spec)
    return value, value


def _edge(pref: float, exponent: float) -> float:
    # exp(-inf) wins against any prefactor, including an infinite one
    return 0.0 if math.isinf(exponent) else pref * math.exp(-exponent)


def envelope(q: TransitionQuery, spec: ProcessSpec, regime, C: float = 1.0, prefactor_form: str = "standard",
             report: RegimeReport | None = None) -> BoundEnvelope:
    q.check(spec)
    regime = Regime.parse(regime)
    if not C >= 1:
        raise SpecError(f"envelope constant must be >= 1, got {C!r}")
    if report is not None and regime not in report.regimes:
        warnings.warn(f"query is not flagged as {regime.value}; envelope evaluated anyway", stacklevel=2)
    pref = prefactor(q, spec, regime, prefactor_form)
    i_low, i_up = exponents(q, spec, regime)
    return BoundEnvelope(
        lower=_edge(pref / C, C * i_low),
        upper=_edge(C * pref, i_up / C),
        prefactor=pref,
        exponent_lower=i_low,
        exponent_upper=i_up,
        regime=regime,
    )


def _required_constant(pref: float, i_low: float, i_up: float, value: float) -> float:
    """Smallest ``C`` in ``[1, C_MAX]`` putting ``value`` inside the envelope, ``inf`` if none."""
    log_v = math.log(value)
    log_p = math.log(pref)

    def inside(log_c: float) -> bool:
        c = math.exp(log_c)
        low = log_p - c * i_low - log_c
        up = log_p - i_up / c + log_c
        return low <= log_v + EDGE_SLACK and up >= log_v - EDGE_SLACK

    if not (math.isfinite(i_low) and math.isfinite(i_up)):
        return math.inf
    a, b = 0.0, math.log(C_MAX)
    if inside(a):
        return 1.0
    # the lower edge decreases and the upper edge increases with C, so one crossing
    if not inside(b):
        return math.inf
    while b - a > 1e-13:
        mid = 0.5 * (a + b)
        if inside(mid):
            b = mid
        else:
            a = mid
    return math.exp(b)


def fit_envelope_constants(observations, spec: ProcessSpec, prefactor_form: str = "standard",
                           min_observations: int = 10, coverage: float = COVERAGE):
    """Smallest ``C >= 1`` whose envelope holds ``coverage`` of ``(query, regime, density)`` observations.

    Returns ``(C, achieved_coverage)``.
    """
    observations = list(observations)
    if len(observations) < min_observations:
        raise SpecError(f"need at least {min_observations} observations, got {len(observations)}")
    regimes = {Regime.parse(r) for _, r, _ in observations}
    if len(regimes) != 1:
        raise SpecError("all observations must share one regime")
    regime = regimes.pop()
    needed = []
    for q, _, value in observations:
        if not value > 0:
            raise SpecError(f"empirical densities must be > 0, got {value!r}")
        pref = prefactor(q, spec, regime, prefactor_form)
        i_low, i_up = exponents(q, spec, regime)
        needed.append(_required_constant(pref, i_low, i_up, value))
    needed = np.array(needed)
    order = np.sort(needed)
    rank = max(1, math.ceil(coverage * len(needed) - 1e-9))
    c_fit = float(order[rank - 1])
    if not math.isfinite(c_fit):
        worst = np.argsort(-needed)[: min(5, len(needed))]
        lines = []
        for i in worst:
            q, _, value = observations[i]
            env = envelope(q, spec, regime, C_MAX, prefactor_form)
            lines.append(f"  t={q.t:g} x={q.start.flat()} xi={q.end.flat()} density={value:.6g} "
                         f"envelope(C=1e6)=[{env.lower:.6g}, {env.upper:.6g}]")
        raise EnvelopeFitError(
            f"no C <= {C_MAX:g} covers {coverage:.0%} of the observations; worst violators:\n" + "\n".join(lines)
        )
    achieved = float(np.mean(needed <= c_fit * (1 + EDGE_SLACK)))
    return c_fit, achieved


CSV_TAIL = ["regime", "lower", "upper", "empirical", "inside"]


def write_envelope_csv(rows, fh) -> None:
    """Rows are ``(query, BoundEnvelope, empirical)`` triples sharing one dimension."""
    rows = list(rows)
    if not rows:
        fh.write(",".join(["t", *CSV_TAIL]) + "\n")
        return
    n = rows[0][0].n
    header = ["t", *[f"x{i + 1}" for i in range(n)], "xdeg", *[f"xi{i + 1}" for i in range(n)], "xideg", *CSV_TAIL]
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for q, env, empirical in rows:
        inside = "" if empirical is None else int(env.contains(empirical))
        writer.writerow([
            repr(q.t), *[repr(v) for v in q.start.flat()], *[repr(v) for v in q.end.flat()],
            env.regime.value, repr(env.lower), repr(env.upper),
            "" if empirical is None else repr(float(empirical)), inside,
        ])


def regime_report_json(q: TransitionQuery, spec: ProcessSpec, report: RegimeReport) -> str:
    return json.dumps({"query": q.to_dict(), "spec": spec.to_dict(), "report": report.to_dict()}, sort_keys=True)

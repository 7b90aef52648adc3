"""Process specifications, query points and the scalar formulas shared by every module.

Two drift families are supported, both with ``n`` Brownian coordinates driving
one integrated-drift coordinate::

    X^i_t = x_i + W^i_t,              i = 1..n
    X^{n+1}_t = x_{n+1} + int_0^t f(X^{1,n}_s) ds

with ``f(v) = |v|^k`` (radial, even ``k`` only) or ``f(v) = sum_i v_i^k``
(componentwise, any ``k >= 1``).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class Family(str, enum.Enum):
    RADIAL = "radial"
    COMPONENT = "component"


class SpecError(ValueError):
    """Raised when a specification, query or configuration violates its invariants."""


@dataclass(frozen=True)
class ProcessSpec:
    family: Family
    n: int
    k: int

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise SpecError(f"n must be a positive integer, got {self.n!r}")
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise SpecError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "k", int(self.k))
        if self.family is Family.RADIAL and self.k % 2:
            raise SpecError(
                f"radial drift |x|^k requires an even exponent (non-smooth at 0 otherwise), got k={self.k}"
            )

    @property
    def even(self) -> bool:
        return self.k % 2 == 0

    def to_dict(self) -> dict:
        return {"family": self.family.value, "n": self.n, "k": self.k}

    @classmethod
    def from_dict(cls, data: dict) -> "ProcessSpec":
        missing = {"family", "n", "k"} - set(data)
        if missing:
            raise SpecError(f"process spec is missing fields: {sorted(missing)}")
        try:
            family = Family(data["family"])
        except ValueError:
            raise SpecError(f"family must be 'radial' or 'component', got {data['family']!r}") from None
        return cls(family, data["n"], data["k"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ProcessSpec":
        return cls.from_dict(json.loads(text))


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise SpecError(f"expected a vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SpacePoint:
    """A point of R^{n+1}: the Brownian block ``nondeg`` and the degenerate coordinate ``deg``."""

    nondeg: tuple
    deg: float

    def __post_init__(self):
        object.__setattr__(self, "nondeg", tuple(float(c) for c in _as_vector(self.nondeg)))
        object.__setattr__(self, "deg", float(self.deg))

    @property
    def n(self) -> int:
        return len(self.nondeg)

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.nondeg)

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "SpacePoint":
        """Build from ``(x_1, ..., x_n, x_{n+1})``."""
        values = list(values)
        if len(values) < 2:
            raise SpecError("a space point needs at least one Brownian coordinate and the degenerate one")
        return cls(tuple(values[:-1]), values[-1])

    def flat(self) -> list:
        return [*self.nondeg, self.deg]


@dataclass(frozen=True)
class TransitionQuery:
    t: float
    start: SpacePoint
    end: SpacePoint

    def __post_init__(self):
        if not (self.t > 0) or not math.isfinite(self.t):
            raise SpecError(f"horizon t must be finite and > 0, got {self.t!r}")
        if self.start.n != self.end.n:
            raise SpecError("start and end points have different dimensions")

    @property
    def n(self) -> int:
        return self.start.n

    @property
    def x(self) -> np.ndarray:
        return self.start.vector

    @property
    def xi(self) -> np.ndarray:
        return self.end.vector

    @property
    def increment(self) -> float:
        """``xi_{n+1} - x_{n+1}``: the value at which the conditional law of Y_t is read."""
        return self.end.deg - self.start.deg

    def check(self, spec: ProcessSpec) -> None:
        if self.n != spec.n:
            raise SpecError(f"query has {self.n} Brownian coordinates but the process spec has n={spec.n}")

    def to_dict(self) -> dict:
        return {"t": self.t, "x": self.start.flat(), "xi": self.end.flat()}


@dataclass(frozen=True)
class MonteCarloConfig:
    paths: int = 100_000
    steps: int = 512
    seed: int = 0
    antithetic: bool = True

    def __post_init__(self):
        if int(self.paths) != self.paths or self.paths < 1:
            raise SpecError(f"paths must be a positive integer, got {self.paths!r}")
        if int(self.steps) != self.steps or self.steps < 2:
            raise SpecError(f"steps must be an integer >= 2, got {self.steps!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise SpecError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        object.__setattr__(self, "paths", int(self.paths))
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "antithetic", bool(self.antithetic))

    def to_dict(self) -> dict:
        return {"paths": self.paths, "steps": self.steps, "seed": self.seed, "antithetic": self.antithetic}

    def replace(self, **changes) -> "MonteCarloConfig":
        return MonteCarloConfig(**{**self.to_dict(), **changes})


def _check_dim(v: np.ndarray, spec: ProcessSpec, name: str = "vector") -> None:
    if v.shape[-1] != spec.n:
        raise SpecError(f"{name} has length {v.shape[-1]} but the process spec has n={spec.n}")


def drift_array(z: np.ndarray, spec: ProcessSpec, axis: int = 0) -> np.ndarray:
    """Drift ``f`` applied along ``axis`` of ``z`` (the axis holding the n Brownian coordinates)."""
    k = spec.k
    if spec.family is Family.RADIAL:
        sq = np.sum(z * z, axis=axis)
        return sq ** (k // 2)
    # |z|^k keeps even powers exactly symmetric
    return np.sum((np.abs(z) if k % 2 == 0 else z) ** k, axis=axis)


def drift_gradient(z: np.ndarray, spec: ProcessSpec, axis: int = 0) -> np.ndarray:
    """Gradient of the drift, same shape as ``z``.

    Radial: ``k |z|^{k-2} z``; componentwise: ``k z_j^{k-1}``.
    """
    k = spec.k
    if spec.family is Family.RADIAL:
        sq = np.sum(z * z, axis=axis, keepdims=True)
        return k * sq ** (k // 2 - 1) * z
    return k * z ** (k - 1)


def drift_value(v, spec: ProcessSpec) -> float:
    v = _as_vector(v)
    _check_dim(v, spec)
    return float(drift_array(v, spec))


def psi(x, xi, spec: ProcessSpec) -> float:
    """Transport weight ``|x|^k + |xi|^k`` (radial) or ``sum_i x_i^k + xi_i^k`` (componentwise)."""
    x, xi = _as_vector(x), _as_vector(xi)
    _check_dim(x, spec, "x")
    _check_dim(xi, spec, "xi")
    return drift_value(x, spec) + drift_value(xi, spec)


def transport_constant(k: int) -> float:
    return 2.0 + 2.0 ** (k - 1) / (k + 1)


def support_contains(q: TransitionQuery, spec: ProcessSpec) -> bool:
    """Whether the transition density can be nonzero at ``q.end``.

    The support is the whole space for odd-k componentwise drift and the open
    half space ``{xi_{n+1} > x_{n+1}}`` otherwise.
    """
    q.check(spec)
    if spec.family is Family.COMPONENT and not spec.even:
        return True
    return q.end.deg > q.start.deg


def norm(v) -> float:
    # hypot avoids the underflow of sqrt(sum v^2) for tiny coordinates
    return math.hypot(*_as_vector(v))

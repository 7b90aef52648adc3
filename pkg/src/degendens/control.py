"""Admissible control paths and Harnack-chain accounting.

A control path moves the Brownian block with piecewise constant velocity
``omega`` while the degenerate coordinate integrates the drift along the way.
Paths are built in two ways:

* main branch: steer the Brownian block from ``x`` to ``xi`` on the first half
  of the horizon, then go out and back along ``+b omega_bar`` / ``-b omega_bar``
  with ``b`` solved so the degenerate coordinate lands on its target;
* boundary branch (even k, small degenerate increment): retract to 0, repeat
  a closed three-segment loop ``m`` times to climb the degenerate coordinate,
  then move out to ``xi``.

The chain exponent adds ``duration * max omega^2 / 2 + 1`` for every
steering segment and one unit per loop of the boundary branch.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Union

import numpy as np

from .core import Family, ProcessSpec, SpacePoint, SpecError, TransitionQuery, _as_vector, drift_array, support_contains

# below this the solver stops refining the bracket (relative width)
BRACKET_TOL = 1e-15
MAX_BISECTIONS = 400


class UnreachableTarget(RuntimeError):
    """The degenerate target lies below what the construction can reach."""

    def __init__(self, message: str, deficit: float):
        super().__init__(message)
        self.deficit = deficit


@dataclass(frozen=True)
class Segment:
    duration: float
    control: tuple
    loop: bool = False  # part of a boundary loop (counted per loop, not per segment)

    def __post_init__(self):
        if not self.duration > 0:
            raise SpecError(f"segment duration must be > 0, got {self.duration!r}")
        object.__setattr__(self, "control", tuple(float(c) for c in _as_vector(self.control)))

    @property
    def omega(self) -> np.ndarray:
        return np.array(self.control)

    @property
    def peak_speed_sq(self) -> float:
        return max(c * c for c in self.control)


@dataclass(frozen=True)
class Block:
    """``count`` repetitions of a closed loop of segments."""

    segments: tuple
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise SpecError("block repetition count must be >= 1")
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def loop_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def duration(self) -> float:
        return self.loop_duration * self.count


Item = Union[Segment, Block]


def quadrature_nodes(k: int) -> int:
    return math.ceil((k + 2) / 2) + 1


def propagate_segment(nondeg, deg: float, seg: Segment, spec: ProcessSpec):
    """End point of a constant-control segment; the drift integral is exact for polynomial drifts."""
    x0 = _as_vector(nondeg)
    omega = seg.omega
    z, w = np.polynomial.legendre.leggauss(quadrature_nodes(spec.k))
    half = 0.5 * seg.duration
    s = half * (z + 1.0)
    points = x0[:, None] + omega[:, None] * s
    increment = half * float(np.sum(w * drift_array(points, spec, axis=0)))
    return x0 + seg.duration * omega, deg + increment


def _propagate_block(nondeg, deg, block: Block, spec: ProcessSpec):
    x, d = _as_vector(nondeg), deg
    for seg in block.segments:
        x, d = propagate_segment(x, d, seg, spec)
    shift = x - _as_vector(nondeg)
    rise = d - deg
    return _as_vector(nondeg) + block.count * shift, deg + block.count * rise


@dataclass(frozen=True)
class ControlPath:
    start: SpacePoint
    items: tuple
    horizon: float
    spec: ProcessSpec = field(compare=False)

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def total_duration(self) -> float:
        return math.fsum(item.duration for item in self.items)

    @property
    def end_time(self) -> float:
        return self.horizon - self.total_duration

    def segments(self, expand_limit: int | None = None) -> List[Segment]:
        """Flat segment list; blocks repeated at most ``expand_limit`` times when given."""
        out = []
        for item in self.items:
            if isinstance(item, Block):
                reps = item.count if expand_limit is None else min(item.count, expand_limit)
                out.extend(list(item.segments) * reps)
            else:
                out.append(item)
        return out

    def knots(self):
        """``(s, nondeg, deg)`` at every item boundary, starting at ``s = 0``."""
        x, d, s = self.start.vector, self.start.deg, 0.0
        out = [(s, x, d)]
        for item in self.items:
            if isinstance(item, Block):
                x, d = _propagate_block(x, d, item, self.spec)
            else:
                x, d = propagate_segment(x, d, item, self.spec)
            s += item.duration
            out.append((s, x, d))
        return out

    def endpoint(self) -> SpacePoint:
        _, x, d = self.knots()[-1]
        return SpacePoint(tuple(x), d)

    def trajectory(self, s: float) -> SpacePoint:
        """Point reached after running the path for parameter ``s`` (time ``horizon - s``)."""
        if not 0 <= s <= self.total_duration * (1 + 1e-12):
            raise SpecError(f"path parameter must lie in [0, {self.total_duration}], got {s!r}")
        x, d, elapsed = self.start.vector, self.start.deg, 0.0
        for item in self.items:
            if elapsed + item.duration < s:
                if isinstance(item, Block):
                    x, d = _propagate_block(x, d, item, self.spec)
                else:
                    x, d = propagate_segment(x, d, item, self.spec)
                elapsed += item.duration
                continue
            if isinstance(item, Block):
                loops = min(item.count - 1, int((s - elapsed) // item.loop_duration))
                if loops:
                    x, d = _propagate_block(x, d, Block(item.segments, loops), self.spec)
                    elapsed += loops * item.loop_duration
                segs = item.segments
            else:
                segs = (item,)
            for seg in segs:
                remaining = s - elapsed
                if remaining <= 0:
                    break
                if remaining < seg.duration:
                    x, d = propagate_segment(x, d, Segment(remaining, seg.control), self.spec)
                    elapsed = s
                    break
                x, d = propagate_segment(x, d, seg, self.spec)
                elapsed += seg.duration
            break
        return SpacePoint(tuple(x), d)


@dataclass(frozen=True)
class ChainEstimate:
    box_count: int
    energy: float
    exponent: float
    boundary_boxes: int = 0

    def __post_init__(self):
        if self.box_count < 1:
            raise SpecError("box_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "box_count": self.box_count,
            "energy": self.energy,
            "exponent": self.exponent,
            "boundary_boxes": self.boundary_boxes,
        }


def segment_box_count(duration: float, control) -> int:
    """Smallest ``m >= 1`` with ``m >= duration * max omega^2 / 2``."""
    level = duration * max(c * c for c in _as_vector(control)) / 2.0
    # absorb round-off so exact integers are not bumped to the next box
    return max(1, math.ceil(level * (1 - 1e-12)))


def chain_estimate(items: Sequence[Item]) -> ChainEstimate:
    boxes = 0
    loops = 0
    energy = 0.0
    exponent = 0.0
    for item in items:
        if isinstance(item, Block):
            loops += item.count
            energy += item.count * sum(s.duration * s.peak_speed_sq for s in item.segments)
            continue
        boxes += segment_box_count(item.duration, item.control)
        energy += item.duration * item.peak_speed_sq
        exponent += item.duration * item.peak_speed_sq / 2.0 + 1.0
    return ChainEstimate(max(1, boxes + loops), energy, exponent + loops, loops)


def chain_cost_exponent(ce: ChainEstimate) -> float:
    return ce.exponent


def steer_flat(x_nondeg, xi_nondeg, duration: float) -> List[Segment]:
    """Constant-control steering of the Brownian block from ``x`` to ``xi`` in ``duration``.

    One segment when its velocity is balanced across coordinates and fast
    enough (``duration * max omega^2 >= 4``); otherwise a fast first half at
    ``4M/sqrt(duration)`` in every coordinate and a second half that lands
    exactly on ``xi``.
    """
    if not duration > 0:
        raise SpecError(f"duration must be > 0, got {duration!r}")
    x, xi = _as_vector(x_nondeg), _as_vector(xi_nondeg)
    if x.shape != xi.shape:
        raise SpecError("x and xi have different lengths")
    gap = xi - x
    omega = gap / duration
    speeds = np.abs(omega)
    if speeds.max() <= 2 * speeds.min() and duration * speeds.max() ** 2 >= 4:
        return [Segment(duration, omega)]
    K = float(np.max(np.abs(gap))) / math.sqrt(duration)
    M = max(3 * K, 1.5)
    fast = np.full(x.shape, 4 * M / math.sqrt(duration))
    back = 2 * gap / duration - fast
    return [Segment(duration / 2, fast), Segment(duration / 2, back)]


def level_direction(xi_nondeg, spec: ProcessSpec) -> np.ndarray:
    """``sign(xi)`` with zeros sent to +1 (even k); all ones for odd k."""
    xi = _as_vector(xi_nondeg)
    if not spec.even:
        return np.ones_like(xi)
    return np.where(xi < 0, -1.0, 1.0)


def level_segments(b: float, xi_nondeg, duration: float, spec: ProcessSpec) -> List[Segment]:
    """Out-and-back pair, each leg ``duration / 4`` long, with controls ``+b omega_bar`` then ``-b omega_bar``."""
    direction = level_direction(xi_nondeg, spec)
    return [Segment(duration / 4, b * direction), Segment(duration / 4, -b * direction)]


def drift_level(b: float, base: SpacePoint, xi_nondeg, duration: float, spec: ProcessSpec) -> float:
    """Degenerate coordinate after the out-and-back pair started at ``(xi, base.deg)``."""
    if not duration > 0:
        raise SpecError(f"duration must be > 0, got {duration!r}")
    xi = _as_vector(xi_nondeg)
    x, d = xi, base.deg
    if b == 0:
        return d + duration / 2 * float(drift_array(xi, spec))
    for seg in level_segments(b, xi, duration, spec):
        x, d = propagate_segment(x, d, seg, spec)
    return d


def solve_drift_level(target_deg: float, base: SpacePoint, xi_nondeg, duration: float, spec: ProcessSpec,
                      min_b: float = 0.0) -> float:
    """``b`` with ``drift_level(b) = target_deg``, by bracketing bisection.

    Even k: the level increases on ``b >= 0`` and the search starts at
    ``min_b``; a target below ``drift_level(min_b)`` raises
    :class:`UnreachableTarget`.  Odd k: the level is increasing and onto over
    all of R.
    """
    def phi(b):
        return drift_level(b, base, xi_nondeg, duration, spec)

    tol = 1e-9 * max(1.0, abs(target_deg))
    if spec.even:
        lo = float(min_b)
        floor = phi(lo)
        if target_deg < floor - tol:
            raise UnreachableTarget(
                f"target {target_deg!r} is below the reachable minimum {floor!r} (deficit {floor - target_deg:.6g})",
                floor - target_deg,
            )
        if target_deg <= floor:
            return lo
        hi = max(1.0, 2 * lo)
        while phi(hi) < target_deg:
            lo, hi = hi, 2 * hi
    else:
        lo, hi = -1.0, 1.0
        while phi(lo) > target_deg:
            hi, lo = lo, 2 * lo
        while phi(hi) < target_deg:
            lo, hi = hi, 2 * hi
    for _ in range(MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi) or hi - lo <= BRACKET_TOL * max(abs(lo), abs(hi)):
            break
        if phi(mid) < target_deg:
            lo = mid
        else:
            hi = mid
    return min((lo, hi), key=lambda b: abs(phi(b) - target_deg))


def loop_constant(spec: ProcessSpec) -> float:
    """Degenerate rise of one unit loop (controls 1, -1, 1 on durations 1/8, 1/4, 1/8)."""
    n, k = spec.n, spec.k
    if spec.family is Family.RADIAL:
        return 4 * n ** (k / 2) / ((k + 1) * 8 ** (k + 1))
    if spec.even:
        return 4 * n / ((k + 1) * 8 ** (k + 1))
    return 0.0


def boundary_loops(rise: float, duration: float, spec: ProcessSpec) -> Block:
    """Closed loops at the origin that raise the degenerate coordinate by ``rise`` in ``duration``."""
    a = loop_constant(spec)
    if a <= 0:
        raise SpecError("boundary loops need an even exponent")
    if not rise > 0:
        raise SpecError(f"boundary rise must be > 0, got {rise!r}")
    span = 2 * duration
    m = max(1, math.ceil((span ** (1 + 2 / spec.k) * (a / rise) ** (2 / spec.k)) * (1 - 1e-12)))
    c_hat = (rise / a) ** (1 / spec.k) * math.sqrt(m) / span ** (0.5 + 1 / spec.k)
    r = math.sqrt(span / m)
    speed = np.full(spec.n, c_hat / r)
    loop = (Segment(r * r / 8, speed, True), Segment(r * r / 4, -speed, True), Segment(r * r / 8, speed, True))
    return Block(loop, m)


def _main_branch(q: TransitionQuery, spec: ProcessSpec) -> list:
    t = q.t
    steer = steer_flat(q.x, q.xi, t / 2)
    x, d = q.x, q.start.deg
    for seg in steer:
        x, d = propagate_segment(x, d, seg, spec)
    base = SpacePoint(tuple(q.xi), d)
    min_b = 4 / math.sqrt(t) if spec.even else 0.0
    b = solve_drift_level(q.end.deg, base, q.xi, t, spec, min_b=min_b)
    return steer + level_segments(b, q.xi, t, spec)


def _retract_time(v: np.ndarray, gap: float, spec: ProcessSpec, horizon: float) -> float:
    f = float(drift_array(v, spec))
    if f <= 0:
        return 0.0
    return min(float(np.max(v * v)) / 4, gap / f, horizon / 3)


def _boundary_branch(q: TransitionQuery, spec: ProcessSpec) -> list:
    t, gap = q.t, q.increment
    x, xi = q.x, q.xi
    t1 = _retract_time(x, gap, spec, t)
    t2 = _retract_time(xi, gap, spec, t)
    items = []
    rise = gap
    if t1 > 0:
        items.append(Segment(t1, -x / t1))
        rise -= t1 * float(drift_array(x, spec)) / (spec.k + 1)
    middle = t - t1 - t2
    tail = []
    if t2 > 0:
        tail.append(Segment(t2, xi / t2))
        rise -= t2 * float(drift_array(xi, spec)) / (spec.k + 1)
    items.append(boundary_loops(rise, middle, spec))
    return items + tail


def build_admissible_path(q: TransitionQuery, spec: ProcessSpec):
    """Control path from ``q.start`` (time ``t``) to ``q.end`` (time 0) and its chain estimate."""
    q.check(spec)
    if not support_contains(q, spec):
        raise SpecError("query end point lies outside the support of the transition density")
    try:
        items = _main_branch(q, spec)
    except UnreachableTarget:
        items = _boundary_branch(q, spec)
    path = ControlPath(q.start, items, q.t, spec)
    return path, chain_estimate(items)


def endpoint_error(path: ControlPath, end: SpacePoint) -> float:
    reached = path.endpoint()
    return float(np.max(np.abs(np.array(reached.flat()) - np.array(end.flat()))))


def shifted_start(xi: SpacePoint, t: float, spec: ProcessSpec, omega=None, alpha: float = 1 / math.sqrt(2)):
    """Point from which the constant control ``omega / (alpha sqrt t)`` reaches ``xi`` in time ``alpha^2 t``."""
    omega = np.ones(xi.n) if omega is None else _as_vector(omega)
    span = alpha * alpha * t
    start = xi.vector - alpha * math.sqrt(t) * omega
    _, rise = propagate_segment(xi.vector, 0.0, Segment(span, -omega / (alpha * math.sqrt(t))), spec)
    return SpacePoint(tuple(start), xi.deg - rise)


def write_path_csv(path: ControlPath, fh, expand_limit: int = 256) -> None:
    """One row per segment start plus the end point: ``s,x1..xn,xdeg,omega1..omegan``.

    Repeated loops are written out at most ``expand_limit`` times; the row after
    a truncated block is the exact block end point.
    """
    n = path.start.n
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["s", *[f"x{i + 1}" for i in range(n)], "xdeg", *[f"omega{i + 1}" for i in range(n)]])
    x, d, s = path.start.vector, path.start.deg, 0.0

    def row(s, x, d, omega):
        writer.writerow([repr(float(s)), *[repr(float(v)) for v in x], repr(float(d)),
                         *[repr(float(v)) for v in omega]])

    for item in path.items:
        if isinstance(item, Block):
            xb, db, sb = x, d, s
            for _ in range(min(item.count, expand_limit)):
                for seg in item.segments:
                    row(sb, xb, db, seg.control)
                    xb, db = propagate_segment(xb, db, seg, path.spec)
                    sb += seg.duration
            x, d = _propagate_block(x, d, item, path.spec)
        else:
            row(s, x, d, item.control)
            x, d = propagate_segment(x, d, item, path.spec)
        s += item.duration
    row(s, x, d, [0.0] * n)


def path_summary(q: TransitionQuery, spec: ProcessSpec, path: ControlPath, ce: ChainEstimate) -> dict:
    return {
        "query": q.to_dict(),
        "spec": spec.to_dict(),
        "segments": sum(len(i.segments) * i.count if isinstance(i, Block) else 1 for i in path.items),
        "total_duration": path.total_duration,
        "endpoint": path.endpoint().flat(),
        "endpoint_error": endpoint_error(path, q.end),
        "chain": ce.to_dict(),
    }


def chain_json(ce: ChainEstimate) -> str:
    return json.dumps(ce.to_dict(), sort_keys=True)

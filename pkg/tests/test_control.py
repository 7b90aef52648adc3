import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degendens import control
from degendens.control import Block, Segment
from degendens.core import ProcessSpec, SpacePoint, SpecError, TransitionQuery

from conftest import query

R2 = ProcessSpec("radial", 1, 2)


def run(segments, x, spec, deg=0.0):
    x, d = np.asarray(x, float), deg
    for seg in segments:
        x, d = control.propagate_segment(x, d, seg, spec)
    return x, d


def test_steer_single_segment():
    segs = control.steer_flat([1.0], [0.0], 0.25)
    assert len(segs) == 1 and segs[0].control == (-4.0,)
    assert segs[0].duration * segs[0].peak_speed_sq == pytest.approx(4)
    assert abs(run(segs, [1.0], R2)[0][0]) < 1e-12


def test_steer_two_phases_at_rest():
    segs = control.steer_flat([0.0], [0.0], 1.0)
    assert [s.control for s in segs] == [(6.0,), (-6.0,)]
    assert run(segs, [0.0], R2)[0][0] == 0


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-5, 5), min_size=n, max_size=n), st.lists(st.floats(-5, 5), min_size=n, max_size=n))),
    st.floats(0.01, 5))
def test_steer_endpoint_exact(pair, duration):
    x, xi = pair
    segs = control.steer_flat(x, xi, duration)
    end, _ = run(segs, x, ProcessSpec("radial", len(x), 2))
    assert np.max(np.abs(end - np.array(xi))) < 1e-12 * max(1.0, *map(abs, x), *map(abs, xi)) * 10
    assert math.fsum(s.duration for s in segs) == pytest.approx(duration, rel=1e-15)


def test_drift_level_closed_form_and_inverse():
    base = SpacePoint((0.0,), 0.3)
    assert control.drift_level(0.0, base, [0.0], 1.0, R2) == 0.3
    for b, T in ((1.0, 1.0), (2.5, 0.7), (4.0, 2.0)):
        assert control.drift_level(b, base, [0.0], T, R2) == pytest.approx(0.3 + b * b * T**3 / 96, rel=1e-12)
    assert control.solve_drift_level(0.3 + 1 / 96, base, [0.0], 1.0, R2) == pytest.approx(1.0, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([("radial", 2), ("radial", 4), ("component", 2), ("component", 4)]), st.integers(1, 3),
       st.floats(0.1, 3), st.integers(0, 2**32))
def test_drift_level_monotone_and_roundtrip(fk, n, T, seed):
    spec = ProcessSpec(fk[0], n, fk[1])
    gen = np.random.default_rng(seed)
    base, xi = SpacePoint(tuple(gen.normal(size=n)), float(gen.normal())), gen.normal(size=n)
    bs = 4 / math.sqrt(T) + np.linspace(0, 5, 12)
    levels = [control.drift_level(b, base, xi, T, spec) for b in bs]
    assert all(b > a for a, b in zip(levels, levels[1:]))
    target = control.drift_level(2.0, base, xi, T, spec)
    assert control.solve_drift_level(target, base, xi, T, spec) == pytest.approx(2.0, abs=1e-9)


def test_odd_k_negative_target():
    spec = ProcessSpec("component", 1, 3)
    base = SpacePoint((0.5,), 0.0)
    b = control.solve_drift_level(-3.0, base, [0.5], 1.0, spec)
    assert b < 0
    assert abs(control.drift_level(b, base, [0.5], 1.0, spec) + 3.0) <= 1e-9 * 3


def test_unreachable_target():
    with pytest.raises(control.UnreachableTarget) as info:
        control.solve_drift_level(-1.0, SpacePoint((0.0,), 0.0), [0.0], 1.0, R2, min_b=4.0)
    assert info.value.deficit > 0


def test_loop_constant():
    assert control.loop_constant(R2) == pytest.approx(4 / (3 * 8**3))
    assert control.loop_constant(R2) == pytest.approx(0.0026042, abs=1e-7)
    # the constant is the rise of the unit loop
    loop = [Segment(1 / 8, [1.0]), Segment(1 / 4, [-1.0]), Segment(1 / 8, [1.0])]
    for spec in (R2, ProcessSpec("radial", 3, 4), ProcessSpec("component", 2, 2)):
        unit = [Segment(s.duration, [c] * spec.n) for s in loop for c in s.control]
        x, d = run(unit, np.zeros(spec.n), spec)
        assert d == pytest.approx(control.loop_constant(spec), rel=1e-12) and np.allclose(x, 0, atol=1e-15)


def test_box_counts_and_exponent():
    assert control.segment_box_count(0.25, [8.0]) == 8
    assert control.segment_box_count(0.25, [0.0]) == 1
    ce = control.chain_estimate([Segment(0.25, [8.0])])
    assert ce.box_count == 8 and control.chain_cost_exponent(ce) == pytest.approx(9)
    ce = control.chain_estimate([Segment(0.5, [0.0]), Segment(2.0, [0.0])])
    assert control.chain_cost_exponent(ce) == 2


def test_lifted_closed_form():
    gen = np.random.default_rng(0)
    spec = ProcessSpec("radial", 3, 2)
    for _ in range(200):
        x, omega = gen.normal(size=3), gen.normal(size=3)
        s, base = float(gen.uniform(0.01, 2)), float(gen.normal())
        _, deg = control.propagate_segment(x, base, Segment(s, omega), spec)
        assert deg == pytest.approx(base + s * x @ x + s * s * x @ omega + s**3 * omega @ omega / 3, abs=1e-12)


FAMILIES = [("radial", 2), ("radial", 4), ("component", 2), ("component", 3), ("component", 4)]


@pytest.mark.parametrize("family,k", FAMILIES)
def test_endpoint_exact_on_fuzz(family, k):
    gen = np.random.default_rng(k + 10 * (family == "radial"))
    for i in range(100):
        spec = ProcessSpec(family, 1 + i % 3, k)
        n = spec.n
        x = gen.normal(size=n) * gen.choice([0.01, 1, 3])
        xi = gen.normal(size=n) * gen.choice([0.01, 1, 3])
        x0 = float(gen.normal())
        step = float(gen.choice([1e-4, 0.1, 1, 10, 100]) * gen.uniform(0.1, 1))
        d = x0 + (step if spec.even else float(gen.normal() * 10))
        q = TransitionQuery(float(gen.uniform(0.05, 3)), SpacePoint(tuple(x), x0), SpacePoint(tuple(xi), d))
        path, ce = control.build_admissible_path(q, spec)
        scale = max(1.0, *(abs(v) for v in q.end.flat()))
        assert control.endpoint_error(path, q.end) < 1e-9 * scale
        assert path.total_duration == pytest.approx(q.t, rel=1e-12)
        assert ce.box_count >= 1 and ce.exponent >= 1


def test_boundary_branch_uses_loops():
    path, ce = control.build_admissible_path(query(1, [0, 0], [0, 1e-4]), R2)
    assert any(isinstance(i, Block) for i in path.items) and ce.boundary_boxes >= 1
    assert control.endpoint_error(path, SpacePoint((0.0,), 1e-4)) < 1e-12


def test_abnormal_direction_cost_bounded():
    for xi1 in (0.2, 0.1, 0.05):
        q = query(xi1**2, [0, 0], [xi1, xi1**4])
        _, ce = control.build_admissible_path(q, R2)
        assert control.chain_cost_exponent(ce) / (xi1**4 / q.end.deg) <= 50


def test_outside_support_rejected():
    with pytest.raises(SpecError):
        control.build_admissible_path(query(1, [0, 1], [0, 1]), R2)


def test_trajectory_and_knots():
    q = query(1, [0.3, 0], [0.5, 0.2])
    path, _ = control.build_admissible_path(q, R2)
    assert path.trajectory(0.0) == q.start
    end = path.trajectory(path.total_duration)
    assert np.allclose(end.flat(), q.end.flat(), atol=1e-12)
    assert path.knots()[-1][0] == pytest.approx(1.0)
    with pytest.raises(SpecError):
        path.trajectory(2.0)


def test_shifted_start_reaches_target():
    xi = SpacePoint((0.4, -0.2), 1.0)
    spec = ProcessSpec("radial", 2, 2)
    start = control.shifted_start(xi, 2.0, spec)
    x, d = control.propagate_segment(start.vector, start.deg, Segment(1.0, np.ones(2)), spec)
    assert np.allclose(x, xi.vector, atol=1e-14) and d == pytest.approx(xi.deg, abs=1e-14)


def test_outputs():
    q = query(1, [0, 0], [0.5, 0.2])
    path, ce = control.build_admissible_path(q, R2)
    buf = io.StringIO()
    control.write_path_csv(path, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "s,x1,xdeg,omega1"
    last = [float(v) for v in lines[-1].split(",")]
    assert last[0] == pytest.approx(1.0) and abs(last[1] - 0.5) < 1e-9 and abs(last[2] - 0.2) < 1e-9
    summary = control.path_summary(q, R2, path, ce)
    assert summary["endpoint_error"] < 1e-9
    assert json.loads(control.chain_json(ce))["box_count"] == ce.box_count


def test_invalid_segments():
    with pytest.raises(SpecError):
        Segment(0.0, [1.0])
    with pytest.raises(SpecError):
        Block((Segment(1.0, [1.0]),), 0)

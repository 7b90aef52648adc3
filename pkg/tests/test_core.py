import json

import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from degendens.core import (
    MonteCarloConfig, ProcessSpec, SpacePoint, SpecError, TransitionQuery, drift_value, norm, psi,
    support_contains, transport_constant,
)

from conftest import query

finite = st.floats(-10, 10, allow_nan=False)


def test_drift_values():
    assert drift_value([3, 4], ProcessSpec("radial", 2, 2)) == 25
    assert drift_value([1, 2], ProcessSpec("component", 2, 3)) == 9
    for family in ("radial", "component"):
        assert drift_value([0, 0], ProcessSpec(family, 2, 4)) == 0


def test_psi_values():
    assert psi([3, 4], [0, 0], ProcessSpec("radial", 2, 2)) == 25
    assert psi([1], [2], ProcessSpec("component", 1, 3)) == 9
    assert psi([0, 0], [0, 0], ProcessSpec("radial", 2, 2)) == 0


def test_transport_constant_values():
    assert transport_constant(2) == pytest.approx(8 / 3, abs=1e-12)
    assert transport_constant(4) == pytest.approx(3.6, abs=1e-12)
    assert transport_constant(1) == pytest.approx(2.5, abs=1e-12)


def test_transport_constant_increasing():
    values = [transport_constant(k) for k in range(2, 11)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_support():
    assert not support_contains(query(1, [0, 1], [0, 1]), ProcessSpec("radial", 1, 2))
    assert support_contains(query(1, [0, 1], [0, 0.5]), ProcessSpec("component", 1, 3))
    assert support_contains(query(1, [0, 1], [0, 2]), ProcessSpec("radial", 1, 2))
    assert not support_contains(query(1, [0, 1], [0, 0.5]), ProcessSpec("component", 1, 2))


def test_radial_odd_k_rejected():
    with pytest.raises(SpecError, match="even"):
        ProcessSpec("radial", 1, 3)


@pytest.mark.parametrize("kwargs", [dict(n=0, k=2), dict(n=1, k=0), dict(n=1.5, k=2), dict(n=True, k=2)])
def test_invalid_spec(kwargs):
    with pytest.raises(SpecError):
        ProcessSpec("component", **kwargs)


def test_spec_json_roundtrip():
    spec = ProcessSpec("component", 3, 5)
    assert ProcessSpec.from_json(spec.to_json()) == spec
    with pytest.raises(SpecError):
        ProcessSpec.from_dict({"family": "nope", "n": 1, "k": 2})


def test_query_validation():
    with pytest.raises(SpecError):
        query(0, [0, 0], [0, 1])
    with pytest.raises(SpecError):
        TransitionQuery(1, SpacePoint((0, 0), 0), SpacePoint((0,), 1))
    with pytest.raises(SpecError):
        query(1, [0, 0], [0, 1]).check(ProcessSpec("radial", 2, 2))
    q = query(2, [1, 2, 3], [4, 5, 7])
    assert q.increment == 4 and q.n == 2
    assert json.loads(json.dumps(q.to_dict())) == {"t": 2.0, "x": [1.0, 2.0, 3.0], "xi": [4.0, 5.0, 7.0]}


def test_mc_config_validation():
    mc = MonteCarloConfig()
    assert (mc.paths, mc.steps, mc.antithetic) == (100_000, 512, True)
    assert mc.replace(seed=3).seed == 3
    for bad in (dict(paths=0), dict(steps=1), dict(seed=-1), dict(paths=2.5)):
        with pytest.raises(SpecError):
            MonteCarloConfig(**bad)


def test_dimension_mismatch():
    with pytest.raises(SpecError):
        drift_value([1, 2], ProcessSpec("radial", 1, 2))


@given(arrays(float, st.integers(1, 4), elements=finite), st.sampled_from([2, 4, 6]),
       st.sampled_from(["radial", "component"]))
def test_even_drift_symmetric(v, k, family):
    spec = ProcessSpec(family, len(v), k)
    assert drift_value(v, spec) == drift_value(-v, spec)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(
    arrays(float, n, elements=finite), arrays(float, n, elements=finite))), st.sampled_from([2, 4]),
    st.sampled_from(["radial", "component"]))
def test_psi_symmetric(pair, k, family):
    x, xi = pair
    spec = ProcessSpec(family, len(x), k)
    assert psi(x, xi, spec) == psi(xi, x, spec)


def test_norm():
    assert norm([3, 4]) == 5

import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from degendens import density
from degendens.core import MonteCarloConfig, ProcessSpec, SpecError

from conftest import query, rel

R2 = ProcessSpec("radial", 1, 2)
MILLION = MonteCarloConfig(paths=1_000_000, seed=31)


def test_point_mass_concentrates():
    samples = np.full(5000, 2.5)
    h = density.silverman_bandwidth(samples)
    est = density.estimate_pY(samples, [2.5, 2.5 - 10 * h, 2.5 + 10 * h])
    assert est.values[0] >= 10 * est.values[1] and est.values[0] >= 10 * est.values[2]


def test_normal_density_and_normalization():
    z = np.random.default_rng(0).standard_normal(1_000_000)
    est = density.estimate_pY(z, [0.0])
    assert rel(est.values[0], 1 / math.sqrt(2 * math.pi)) < 0.03
    grid = np.linspace(-6 * z.std(), 6 * z.std(), 2001)
    vals = density.estimate_pY(z, grid).values
    total = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid)))
    assert 0.97 <= total <= 1.03


def test_estimator_validation():
    with pytest.raises(SpecError):
        density.estimate_pY(np.zeros(10), [0.0])
    with pytest.raises(SpecError):
        density.estimate_pY(np.zeros(2000), [])
    with pytest.raises(SpecError):
        density.estimate_pY(np.zeros(2000), [0.0], bandwidth=-1)


def test_unresolved_values_have_rule_of_three_halfwidth():
    est = density.estimate_pY(np.random.default_rng(1).standard_normal(2000), [100.0], bandwidth=0.5)
    assert est.values[0] == 0 and est.halfwidth[0] == pytest.approx(3 / (2 * 2000 * 0.5))


def test_outside_support_is_zero():
    mc = MonteCarloConfig(paths=2048)
    assert density.transition_density(query(1, [0, 1], [0, 1]), R2, mc) == (0.0, 0.0)
    assert density.transition_density(query(1, [0, 1], [0, 0.5]), ProcessSpec("component", 1, 4), mc) == (0.0, 0.0)


def test_k1_profile_matches_gaussian_oracle():
    spec = ProcessSpec("component", 1, 1)
    mc = MonteCarloConfig(paths=200_000, seed=32)
    for xi1 in (-0.5, 0.0, 0.5):
        degs = xi1 / 2 + np.array([-0.25, 0.0, 0.25])
        values, hw, _ = density.transition_density_profile(query(1, [0, 0], [xi1, 0]), spec, mc, degs)
        for d, v in zip(degs, values):
            assert rel(v, density.gaussian_k1_oracle(query(1, [0, 0], [xi1, d]), 1)) < 0.10


def test_symmetry_under_reflection():
    mc = MonteCarloConfig(paths=200_000, seed=33)
    a, ha = density.transition_density(query(1, [0, 0], [0.7, 0.4]), R2, mc)
    b, hb = density.transition_density(query(1, [0, 0], [-0.7, 0.4]), R2, mc.replace(seed=34))
    assert abs(a - b) <= ha + hb


def test_gaussian_oracle_values():
    assert density.gaussian_k1_oracle(query(1, [0, 0], [0, 0]), 1) == pytest.approx(math.sqrt(12) / (2 * math.pi),
                                                                                     rel=1e-12)
    # the mode sits at the conditional mean t (x1 + xi1) / 2
    degs = np.linspace(0.3, 0.7, 401)
    vals = [density.gaussian_k1_oracle(query(1, [0.5, 0], [0.5, d]), 1) for d in degs]
    assert degs[int(np.argmax(vals))] == pytest.approx(0.5, abs=1e-9)
    ratio = density.gaussian_k1_oracle(query(2, [0.5, 0], [0.5, 1.0]), 1) / \
        density.gaussian_k1_oracle(query(1, [0.5, 0], [0.5, 0.5]), 1)
    assert ratio == pytest.approx(0.25, rel=1e-12)


def test_closed_form_values():
    assert density.kolmogorov_formula(query(1, [0, 0], [0, 0]), 1) == pytest.approx(math.sqrt(3) / (2 * math.pi))
    assert density.kolmogorov_formula(query(2, [0, 0], [0, 0]), 1) == pytest.approx(math.sqrt(3) / (8 * math.pi))
    assert density.kolmogorov_formula(query(1, [1, 0], [1, 1]), 1) == pytest.approx(math.sqrt(3) / (2 * math.pi))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2))
def test_closed_form_is_oracle_with_doubled_covariance(t, x1, xi1, d):
    q = query(t, [x1, 0.0], [xi1, d])
    assert density.kolmogorov_formula(q, 1) == pytest.approx(density.gaussian_k1_oracle(q, 1, variance_scale=2),
                                                             rel=1e-9, abs=1e-300)


def test_survival_special_cases():
    q = query(1, [0, 0], [0, 1])
    samples = np.random.default_rng(2).uniform(0.01, 1, 5000)
    assert density.survival_probability(q, R2, None, -1.0, samples=samples) == (1.0, 0.0)
    assert density.survival_probability(q, R2, None, math.inf) == (0.0, 0.0)
    grid = np.linspace(0, 1, 30)
    probs = [density.survival_probability(q, R2, None, y, samples=samples)[0] for y in grid]
    assert all(b <= a for a, b in zip(probs, probs[1:]))


def test_small_ball_ordering():
    q = query(1, [0, 0], [0, 1])
    y = density.sample_Y(q, R2, MILLION)
    assert density.small_ball_probability(q, R2, None, y.max() + 1, samples=y)[0] == pytest.approx(1.0)
    grid = np.geomspace(1e-3, 1, 20)
    probs = [density.small_ball_probability(q, R2, None, e, samples=y)[0] for e in grid]
    assert all(b >= a for a, b in zip(probs, probs[1:]))
    p1, s1 = density.small_ball_probability(q, R2, None, 0.02, samples=y)
    p2, s2 = density.small_ball_probability(q, R2, None, 0.05, samples=y)
    assert p2 - p1 >= 3 * math.hypot(s1, s2)


def test_small_ball_decreases_away_from_origin():
    mc = MonteCarloConfig(paths=200_000, seed=35)
    results = [density.small_ball_probability(query(1, [x1, 0], [x1, 1]), R2, mc.replace(seed=35 + i), 0.2)
               for i, x1 in enumerate((0.5, 1.0, 2.0))]
    for (pa, sa), (pb, sb) in zip(results, results[1:]):
        assert pa - pb >= 3 * math.hypot(sa, sb)


def test_exact_synthetic_tail_fits():
    ys = np.linspace(1, 20, 30)
    fit = density.fit_tail_exponent(list(zip(ys, -ys)))
    assert fit.exponent == pytest.approx(1.0, abs=1e-12) and fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert density.fit_tail_exponent(list(zip(ys, -np.sqrt(ys)))).exponent == pytest.approx(0.5, abs=1e-12)
    lin = density.fit_log_survival(list(zip(ys, 0.3 - 2 * ys)))
    assert lin.exponent == pytest.approx(-2) and lin.intercept == pytest.approx(0.3)


def test_fit_validation():
    with pytest.raises(SpecError):
        density.fit_tail_exponent([(1, -1)] * 3)
    with pytest.raises(SpecError):
        density.fit_tail_exponent([(1, -1)] * 6)
    with pytest.raises(SpecError):
        density.fit_tail_exponent([(y, 0.0) for y in range(1, 7)])


def test_quartic_tail_exponent():
    y = density.sample_Y(query(1, [0, 0], [0, 1]), ProcessSpec("radial", 1, 4), MILLION)
    fit = density.fit_tail_exponent(density.tail_points(y, 0.9, 0.999))
    assert 0.35 <= fit.exponent <= 0.65


def test_quadratic_tails():
    y = density.sample_Y(query(1, [0, 0], [0, 1]), R2, MILLION)
    assert density.fit_log_survival(density.tail_points(y)).r_squared > 0.98
    assert abs(density.fit_tail_exponent(density.small_ball_points(y)).exponent + 1) <= 0.2


def test_report_and_csv():
    est = density.estimate_pY(np.random.default_rng(3).standard_normal(2000), [0.0, 1.0])
    buf = io.StringIO()
    density.write_density_csv(est, buf)
    assert buf.getvalue().splitlines()[0] == "y,density,halfwidth"
    rep = json.loads(density.density_report(query(1, [0, 0], [0, 1]), R2, MonteCarloConfig(), est))
    assert rep["estimate"]["samples_used"] == 2000

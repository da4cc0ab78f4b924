import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphsmooth import NumericalError, SmoothnessSpec, ValidationError, pinsker_estimate, pinsker_filter, solve_pinsker_delta
from graphsmooth.pinsker import (
    least_favorable_profile,
    linear_risk,
    max_linear_risk,
    pinsker_b,
    pinsker_equation,
    solve_delta_from_b,
    theoretical_rate_slope,
)

from oracles import pinsker_lhs_bruteforce


def test_small_instance_closed_form():
    # n = 4, beta = gamma = r = Q = 1: active set {b = 1, 2, 2}, delta = 5 / 13
    spec = SmoothnessSpec(1, 1, 1, 1)
    assert solve_pinsker_delta(spec, 4) == pytest.approx(5 / 13, abs=1e-12)


def test_degenerate_single_cell():
    assert solve_delta_from_b([1.0], 1.0, 1.0) == pytest.approx(0.5)
    assert solve_delta_from_b([1.0], 1.0, 2.0) == pytest.approx(1 / 5)


def test_finite_grid_agrees_with_infinite_when_wide():
    spec = SmoothnessSpec(1.5, 1.0, 2.0, 0.8)
    d = solve_pinsker_delta(spec, 10)
    b = pinsker_b(spec, 10, int(math.ceil(d ** -1.0)) + 5)
    assert solve_delta_from_b(b, 10, 0.8) == pytest.approx(d, rel=1e-10)


@given(
    st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.5, 3), st.floats(0.2, 5), st.integers(1, 64)
)
def test_defining_equation_residual(beta, gamma, r, Q, n):
    spec = SmoothnessSpec(beta, gamma, r, Q)
    d = solve_pinsker_delta(spec, n)
    assert 0 < d < 1
    assert abs(pinsker_equation(spec, n, d) - Q**2) < 1e-8 * Q**2
    J = int(math.ceil(d ** (-1 / gamma))) + 2
    assert abs(pinsker_lhs_bruteforce(pinsker_b(spec, n, J), n, d) - Q**2) < 1e-8 * Q**2 + 1e-9


@given(st.floats(0.2, 3), st.floats(0.2, 3))
def test_delta_decreases_with_Q(q1, q2):
    if abs(q1 - q2) < 1e-6:
        return
    lo, hi = sorted((q1, q2))
    assert solve_pinsker_delta(SmoothnessSpec(1, 1, 1, hi), 8) < solve_pinsker_delta(SmoothnessSpec(1, 1, 1, lo), 8)


def test_filter_weights_and_active_set():
    spec = SmoothnessSpec(2, 1, 1, 1)
    f = pinsker_filter(spec, 16)
    assert np.all((f.weights >= 0) & (f.weights <= 1))
    assert f.active_set_size == int(np.count_nonzero(f.weights))
    # active-set size is bounded by n / delta**(1/gamma)
    assert f.active_set_size <= 16 * f.delta ** (-1 / spec.gamma)
    with pytest.raises(ValidationError):
        pinsker_estimate(np.zeros((3, 3)), f)


def test_huge_active_set_raises(monkeypatch):
    import graphsmooth.pinsker as pk

    monkeypatch.setattr(pk, "MAX_TEMPORAL_TERMS", 100)
    with pytest.raises(NumericalError, match="temporal terms"):
        solve_pinsker_delta(SmoothnessSpec(1, 0.5, 1, 20.0), 4)


def test_least_favorable_profile_on_boundary():
    spec = SmoothnessSpec(1, 1, 1, 1.3)
    n = 12
    f = pinsker_filter(spec, n)
    T = f.weights.shape[1] + 1
    prof = least_favorable_profile(spec, n, T, f.delta)
    assert np.sum(pinsker_b(spec, n, T) ** 2 * prof) / n == pytest.approx(spec.Q**2, rel=1e-9)
    # Bayes linear rule for that prior is the Pinsker filter
    np.testing.assert_allclose(prof / (1 + prof), pinsker_filter(spec, n, T, f.delta).weights, atol=1e-12)


def test_pinsker_beats_other_linear_rules_in_worst_case():
    spec = SmoothnessSpec(1, 1, 1, 1)
    n = 16
    f = pinsker_filter(spec, n)
    N, T = f.weights.shape
    best = max_linear_risk(f.weights, spec, n)
    # minimax value of linear rules equals the sum of weights over n
    assert best == pytest.approx(np.sum(f.weights) / n, rel=1e-9)
    rng = np.random.default_rng(0)
    for _ in range(50):
        other = np.clip(f.weights + 0.05 * rng.standard_normal(f.weights.shape), 0, 1)
        assert max_linear_risk(other, spec, n) >= best - 1e-12
    for cut in (1, 2, 3):
        proj = np.zeros((n, T))
        proj[:, :cut] = 1.0
        assert max_linear_risk(proj, spec, n) > best


def test_linear_risk_monte_carlo():
    spec = SmoothnessSpec(1, 1, 1, 1)
    f = pinsker_filter(spec, 8)
    rng = np.random.default_rng(1)
    theta = rng.standard_normal(f.weights.shape) * 0.3
    exact = linear_risk(f.weights, theta, 8)
    losses = [np.sum((pinsker_estimate(theta + rng.standard_normal(theta.shape), f) - theta) ** 2) / 8 for _ in range(20000)]
    assert np.mean(losses) == pytest.approx(exact, rel=0.02)


def test_theoretical_slope():
    assert theoretical_rate_slope(SmoothnessSpec(1, 1, 1)) == pytest.approx(-0.5)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopftrl.solvers import (
    SolverError,
    exp_weights,
    hybrid_gradient,
    negentropy_gradient,
    solve_hybrid,
    solve_tsallis,
    stationarity_residual,
    tsallis_gradient,
)


def bisect(f, lo, hi, iters=200):
    """Root of an increasing function on [lo, hi]."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tsallis_by_bisection(L, eta):
    # p_i = (eta L_i + lam)^-2, lam > -eta min L
    L = np.asarray(L, float)
    lo = -eta * L.min() + 1e-300
    hi = -eta * L.min() + math.sqrt(L.size)
    lam = bisect(lambda lam: 1.0 - np.sum((eta * L + lam) ** -2.0), lo + 1e-12, hi)
    p = (eta * L + lam) ** -2.0
    return p / p.sum()


def hybrid_by_nested_bisection(L, eta, zeta):
    g = lambda x: -1.0 / (eta * math.sqrt(x)) + (math.log(x) + 1.0) / zeta

    def p_of(lam):
        # g(p_i) = -L_i - lam, g increasing on (0, 1]
        out = []
        for l in L:
            c = -l - lam
            if g(1.0) <= c:
                out.append(1.0)
            else:
                out.append(bisect(lambda x: g(x) - c, 1e-300, 1.0))
        return np.array(out)

    lam = bisect(lambda lam: 1.0 - p_of(lam).sum(), -1e3, 1e3)
    p = p_of(lam)
    return p / p.sum()


# frozen from the bisection oracles above
TSALLIS_K2 = np.array([0.93849568, 0.06150432])
HYBRID_K2 = np.array([0.64104332, 0.35895668])


def test_tsallis_zero_losses_uniform():
    p, lam = solve_tsallis(np.zeros(4), 0.1)
    np.testing.assert_allclose(p, 0.25, atol=1e-15)
    assert abs(lam - 2.0) <= 1e-12


@pytest.mark.parametrize("K", [2, 3, 7, 16, 100])
def test_tsallis_lambda_is_sqrt_k_at_zero(K):
    _, lam = solve_tsallis(np.zeros(K), 0.37)
    assert abs(lam - math.sqrt(K)) <= 1e-12


def test_tsallis_two_arm_example():
    p, _ = solve_tsallis([0.0, 3.0], 1.0)
    oracle = tsallis_by_bisection([0.0, 3.0], 1.0)
    np.testing.assert_allclose(oracle, TSALLIS_K2, atol=1e-8)
    np.testing.assert_allclose(p, oracle, atol=1e-12)


def test_tsallis_closed_form_probabilities():
    L = np.array([0.2, 1.5, 4.0])
    p, lam = solve_tsallis(L, 0.5)
    np.testing.assert_allclose(p, (0.5 * L + lam) ** -2, rtol=1e-12)


def test_hybrid_two_arm_example():
    p = solve_hybrid([0.0, 1.0], 1.0, 1.0)
    oracle = hybrid_by_nested_bisection([0.0, 1.0], 1.0, 1.0)
    np.testing.assert_allclose(oracle, HYBRID_K2, atol=1e-8)
    np.testing.assert_allclose(p, oracle, atol=1e-10)


def test_hybrid_zero_losses_uniform():
    np.testing.assert_allclose(solve_hybrid(np.zeros(5), 0.3, 2.0), 0.2, atol=1e-15)


def test_exp_weights_example():
    np.testing.assert_allclose(exp_weights([0.0, 1.0], math.log(2)), [2 / 3, 1 / 3], atol=1e-15)


def test_exp_weights_large_losses_no_overflow():
    p = exp_weights([1e6, 0.0, 1e6 + 1], 1.0)
    np.testing.assert_allclose(p, [0.0, 1.0, 0.0], atol=1e-300)


@pytest.mark.parametrize("bad", [[], [np.nan, 0.0], [np.inf, 1.0]])
def test_rejects_bad_losses(bad):
    with pytest.raises(ValueError):
        solve_tsallis(bad, 1.0)


@pytest.mark.parametrize("eta", [0.0, -1.0, math.inf, math.nan])
def test_rejects_bad_rates(eta):
    with pytest.raises(ValueError):
        solve_tsallis([0.0, 1.0], eta)
    with pytest.raises(ValueError):
        solve_hybrid([0.0, 1.0], 1.0, eta)


def test_solver_error_is_arithmetic():
    assert issubclass(SolverError, ArithmeticError)


def test_extreme_scale_still_on_simplex():
    L = np.array([0.0, 1e8, 1e8, 5.0])
    p, _ = solve_tsallis(L, 10.0)
    assert abs(p.sum() - 1.0) <= 1e-12 and np.all(p > 0)
    q = solve_hybrid(L, 10.0, 0.01)
    assert abs(q.sum() - 1.0) <= 1e-12 and np.all(q >= 0)


losses = st.lists(st.floats(0.0, 200.0), min_size=2, max_size=12).map(np.array)
rates = st.floats(1e-3, 5.0)


@settings(max_examples=200, deadline=None)
@given(losses, rates, st.floats(-50.0, 50.0))
def test_tsallis_properties(L, eta, c):
    p, _ = solve_tsallis(L, eta)
    assert abs(p.sum() - 1.0) <= 1e-12 and np.all(p > 0)
    assert stationarity_residual(p, L, tsallis_gradient(eta)) <= 1e-9
    # shift invariance
    np.testing.assert_allclose(solve_tsallis(L + c, eta)[0], p, atol=1e-12)
    # order reversal: smaller loss, larger probability
    order = np.argsort(L, kind="stable")
    assert np.all(np.diff(p[order]) <= 1e-15)


@settings(max_examples=200, deadline=None)
@given(losses, rates, rates)
def test_hybrid_properties(L, eta, zeta):
    p = solve_hybrid(L, eta, zeta)
    assert abs(p.sum() - 1.0) <= 1e-12 and np.all(p >= 0)
    if p.min() > 1e-200:
        assert stationarity_residual(p, L, hybrid_gradient(eta, zeta)) <= 1e-9
    perm = np.random.default_rng(len(L)).permutation(L.size)
    np.testing.assert_allclose(solve_hybrid(L[perm], eta, zeta), p[perm], atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(losses, rates)
def test_exp_weights_stationary(L, eta):
    p = exp_weights(L, eta)
    if p.min() > 1e-300:
        assert stationarity_residual(p, L, negentropy_gradient(eta)) <= 1e-9 * max(1, 1 / eta)

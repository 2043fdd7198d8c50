import math

import numpy as np
import pytest

from coopftrl.graphs import CommGraph, build_star, single_agent
from coopftrl.oracles import (
    OracleFailure,
    OracleReport,
    estimator_moment_check,
    hybrid,
    independence_check,
    independence_sides,
    kkt_residual,
    negentropy,
    pgd_argmin_oracle,
    project_simplex,
    stability_check,
    tsallis,
)
from coopftrl.policies import E_FACTOR


def test_report_pass_rule():
    assert OracleReport("c", "i", "o", "x", 1e-9, 1e-9).passed
    assert not OracleReport("c", "i", "o", "x", 2e-9, 1e-9).passed
    assert OracleReport("c", "i", "o", "x", 0.0, 0.0).row()["passed"] is True


def test_projection():
    np.testing.assert_allclose(project_simplex(np.array([0.2, 0.2])), [0.5, 0.5])
    np.testing.assert_allclose(project_simplex(np.array([5.0, 0.0, -1.0])), [1, 0, 0])
    y = np.random.default_rng(0).normal(size=7)
    p = project_simplex(y)
    assert abs(p.sum() - 1) < 1e-12 and p.min() >= 0


@pytest.mark.parametrize("reg", [tsallis(0.7), hybrid(0.7, 2.0), negentropy(0.7)])
def test_oracle_uniform_at_zero(reg):
    np.testing.assert_allclose(pgd_argmin_oracle(np.zeros(4), reg), 0.25, atol=1e-9)


def test_oracle_two_arm_tsallis():
    p = pgd_argmin_oracle(np.array([0.0, 3.0]), tsallis(1.0))
    np.testing.assert_allclose(p, [0.93849568, 0.06150432], atol=1e-8)


def test_oracle_negentropy_softmax():
    L = np.array([0.0, 1.0, 2.5])
    p = pgd_argmin_oracle(L, negentropy(0.8))
    w = np.exp(-0.8 * L)
    np.testing.assert_allclose(p, w / w.sum(), atol=1e-9)
    assert kkt_residual(p, L, negentropy(0.8)) <= 1e-8


def test_oracle_reports_failure():
    with pytest.raises(OracleFailure):
        pgd_argmin_oracle(np.array([0.0, 1.0]), tsallis(1.0), pgd_iters=1, newton_iters=0)


def test_independence_single_agent_uniform():
    K = 6
    lhs, rhs = independence_sides(single_agent(), np.full((1, K), 1 / K), K)
    assert lhs == pytest.approx(math.sqrt(K))
    assert rhs == pytest.approx(math.sqrt(E_FACTOR * (1 + 1 / K) * K))
    assert independence_check(single_agent(), np.full((1, K), 1 / K)).passed


def test_independence_complete_graph():
    N, K = 4, 3
    g = CommGraph.from_edges(N, [(u, v) for u in range(N) for v in range(u + 1, N)])
    p = np.array([0.5, 0.3, 0.2])
    lhs, _ = independence_sides(g, np.tile(p, (N, 1)), K)
    q = 1 - (1 - p) ** N
    assert lhs == pytest.approx(N * np.sum(p ** 1.5 / q), rel=1e-13)


def test_stability_zero_increments():
    probs = np.tile([0.25, 0.75], (10, 1))
    rep = stability_check(probs, np.zeros((10, 2)), 0.01, 1)
    assert rep.passed and "threshold" not in rep.note


def test_stability_flags_inadmissible_rate():
    probs = np.array([[0.5, 0.5], [0.1, 0.9]])
    rep = stability_check(probs, np.array([[0.0, 0.0], [0.0, 0.0]]), 1.0, 1)
    assert not rep.passed and "threshold" in rep.note


def test_moments_zero_loss():
    rep = estimator_moment_check([[0.5, 0.5]], [0.0, 0.0], samples=10_000)
    assert rep.passed and rep.discrepancy == 0.0


def test_moments_three_agents():
    rng = np.random.default_rng(3)
    rep = estimator_moment_check(rng.dirichlet(np.ones(4), 3), rng.random(4), 100_000, seed=1)
    assert rep.passed


def test_moments_need_enough_samples():
    with pytest.raises(ValueError):
        estimator_moment_check([[0.9, 0.1]], [1.0, 1.0], 100)


def test_moments_detect_wrong_weights(monkeypatch):
    import coopftrl.oracles as oracles

    monkeypatch.setattr(oracles, "aggregate_importance_weights", lambda d: np.full(2, 0.5))
    rep = oracles.estimator_moment_check([[0.9, 0.1]], [1.0, 1.0], 20_000, seed=0)
    assert not rep.passed

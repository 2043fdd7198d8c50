import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coopftrl.graphs import build_erdos_renyi, build_regular, build_star, single_agent
from coopftrl.policies import ALGORITHMS, PolicyOptions, plan_policies
from coopftrl.simulator import (
    BernoulliEnvironment,
    ConfigError,
    RunConfig,
    TableEnvironment,
    agent_uniforms,
    bernoulli_means,
    comm_cost,
    empirical_regret,
    message_bits,
    pseudo_regret,
    run,
    simulate_fast,
    simulate_reference,
)


def test_means_k10():
    m = bernoulli_means(10)
    np.testing.assert_allclose(m, 0.1 + 0.8 * np.arange(10) / 9, atol=1e-15)
    assert m[1] == pytest.approx(0.18889, abs=1e-5)
    with pytest.raises(ConfigError):
        bernoulli_means(1)


def test_message_bits_example():
    assert message_bits(4, 1024, 8) == 591


def test_comm_cost():
    g = build_star(5)
    b = message_bits(5, 100, 3)
    assert comm_cost(g, 100, 3, senders=[]) == 0
    assert comm_cost(g, 100, 3, senders=[0]) == 4 * b
    assert comm_cost(g, 100, 3) == 8 * b


def test_empirical_regret_examples():
    per, avg = empirical_regret(np.array([[0]]), np.array([[0.7, 0.2]]))
    assert per[0, 0] == pytest.approx(0.5)
    losses = np.array([[0.3, 0.1], [0.5, 0.0]])
    per, avg = empirical_regret(np.array([[1, 1], [1, 1]]), losses)
    assert np.all(per == 0) and np.all(avg == 0)


def test_pseudo_regret_average():
    per, avg = pseudo_regret(np.array([[2, 0], [2, 0]]), [0.1, 0.5, 0.9])
    np.testing.assert_allclose(per, [[0.8, 0.8], [0.8, 0.8]])
    np.testing.assert_allclose(avg, per[0])


def test_environment_shared_and_seeded():
    env = BernoulliEnvironment(5)
    a, b = env.loss_matrix(50, 3), env.loss_matrix(50, 3)
    assert np.array_equal(a, b) and set(np.unique(a)) <= {0.0, 1.0}


def test_table_environment_round_trip(tmp_path):
    table = np.random.default_rng(0).random((20, 3))
    env = TableEnvironment(table)
    env.to_csv(tmp_path / "l.csv")
    back = TableEnvironment.from_csv(tmp_path / "l.csv")
    assert np.array_equal(back.table, table)
    assert (tmp_path / "l.csv").read_text().startswith("t,loss_1,loss_2,loss_3\n")
    with pytest.raises(ConfigError):
        back.loss_matrix(21, 0)
    with pytest.raises(ConfigError):
        TableEnvironment([[0.5, 1.5]])


def test_table_environment_bad_header(tmp_path):
    (tmp_path / "l.csv").write_text("round,a,b\n1,0,1\n")
    with pytest.raises(ConfigError):
        TableEnvironment.from_csv(tmp_path / "l.csv")


def test_config_validation():
    g = build_star(3)
    for bad in (dict(T=0), dict(K=1), dict(regret_mode="x"), dict(engine="gpu")):
        kw = dict(graph=g, K=3, T=10, algorithm="cftrl")
        kw.update(bad)
        with pytest.raises(ConfigError):
            run(RunConfig(**kw))
    with pytest.raises(ConfigError):
        run(RunConfig(g, 3, 10, "cftrl", loss_table=np.zeros((10, 3))))


GRAPHS = {
    "triangle": build_regular(3, 2),
    "star_d3": build_star(6, edge_delay=3),
    "er": build_erdos_renyi(10, seed=4, edge_delay=2),
    "single": single_agent(edge_delay=2),
    "long_path_d2": build_regular(8, 2, seed=1, edge_delay=2),
}


@pytest.mark.parametrize("algorithm", ALGORITHMS)
@pytest.mark.parametrize("name", sorted(GRAPHS))
def test_engines_bit_identical(algorithm, name):
    g = GRAPHS[name]
    K, T = 4, 300
    plan = plan_policies(algorithm, g, K, T, PolicyOptions())
    losses = BernoulliEnvironment(K).loss_matrix(T, 1)
    u = agent_uniforms(g.n_agents, T, 1)
    a = simulate_reference(plan, g, losses, u, record=True)
    b = simulate_fast(plan, g, losses, u, record=True)
    assert np.array_equal(a.arms, b.arms)
    assert np.array_equal(a.probs, b.probs)
    assert np.array_equal(a.increments, b.increments)


@pytest.mark.parametrize("d", [1, 2, 5])
def test_first_informed_round(d):
    # the increment applied at the end of round d + 1 is the first nonzero one,
    # so round d + 2 is the first that can differ from uniform
    g = build_regular(3, 2, edge_delay=d)
    res = run(RunConfig(g, 5, 20, "dftrl", seed=0, record=True))
    probs, inc = res.trace.probs, res.trace.increments
    assert np.all(inc[:, :d] == 0)
    assert np.any(inc[:, d] > 0)
    np.testing.assert_allclose(probs[:, : d + 1], 0.2, atol=1e-15)
    assert np.abs(probs[:, d + 1] - 0.2).max() > 1e-6


def test_follower_copies_center_exactly():
    g = build_regular(8, 2, seed=1, edge_delay=2)
    res = run(RunConfig(g, 6, 200, "cftrl", seed=3, record=True))
    a = res.meta["assignment"]
    probs = res.trace.probs
    for v in range(8):
        c, lag = a["center_of"][v], a["dist"][v] * 2
        if c == v:
            continue
        assert np.all(probs[v, :lag] == 1 / 6)
        assert np.array_equal(probs[v, lag:], probs[c, : 200 - lag])


def test_same_arm_same_loss():
    g = build_star(4)
    res = run(RunConfig(g, 3, 200, "exp3coop", seed=2, regret_mode="empirical"))
    losses = BernoulliEnvironment(3).loss_matrix(200, 2)
    for v in range(4):
        assert np.array_equal(res.incurred[v], losses[np.arange(200), res.arms[v]])


@pytest.mark.parametrize("algorithm", ALGORITHMS)
def test_run_deterministic(algorithm):
    cfg = RunConfig(single_agent(), 3, 200, algorithm, seed=9)
    a, b = run(cfg), run(cfg)
    assert np.array_equal(a.arms, b.arms) and np.array_equal(a.regret, b.regret)
    assert a.meta["config_hash"] == b.meta["config_hash"]


def test_run_result_shapes_and_average():
    g = build_star(5)
    res = run(RunConfig(g, 4, 150, "center_exp3", seed=1))
    assert res.arms.shape == res.regret.shape == (5, 150)
    np.testing.assert_allclose(res.avg_regret, res.regret.mean(axis=0), rtol=0, atol=1e-12)
    assert np.all(res.comm_bits == comm_cost(g, 150, 4))


def test_adding_agents_keeps_streams():
    u3 = agent_uniforms(3, 50, 7)
    u5 = agent_uniforms(5, 50, 7)
    assert np.array_equal(u3, u5[:3])


def test_empirical_mode_with_table():
    table = np.tile([[0.0, 1.0, 1.0]], (100, 1))
    res = run(RunConfig(build_star(3), 3, 100, "cftrl", regret_mode="empirical",
                        loss_table=table))
    assert res.regret[:, -1].min() >= 0
    assert res.avg_regret[-1] < 100


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(ALGORITHMS), st.integers(1, 3), st.integers(2, 6), st.integers(0, 999))
def test_distributions_valid(algorithm, d, K, seed):
    g = build_star(4, edge_delay=d)
    res = run(RunConfig(g, K, 60, algorithm, seed=seed, record=True))
    p = res.trace.probs
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=2), 1.0, atol=1e-12)

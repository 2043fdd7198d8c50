"""CFTRL, DFTRL and the two Exp3 baselines as per-agent policies.

Every policy exposes ``act(t)`` (distribution for round ``t``) and
``observe(t, snapshot)`` (end-of-round estimator update from reports sent at
``t - d``). Followers additionally receive their center's distributions through
``relay(s, probs)``.

Learning rates and roles are fixed up front by :func:`plan_policies`; the
resulting :class:`PolicyPlan` drives both the object-based reference engine and
the jitted engine in :mod:`coopftrl.simulator`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimation import ObservedCumLoss, ProtocolError, update_estimate
from .graphs import CenterAssignment, independence_number, select_centers
from .solvers import SolverError, _exp_weights, _hybrid, _tsallis

ALGORITHMS = ("cftrl", "dftrl", "exp3coop", "center_exp3")

# agent kinds in a plan
TSALLIS, HYBRID, EXP, FOLLOWER = 0, 1, 2, 3
KIND_NAMES = {TSALLIS: "tsallis", HYBRID: "hybrid", EXP: "exp", FOLLOWER: "follower"}

E_FACTOR = 1.0 / (1.0 - 1.0 / math.e)


# --- learning rates ------------------------------------------------------------


def cftrl_learning_rate(m, T):
    """``sqrt(m / (3T))`` with ``m`` a neighborhood size or a mass."""
    if m <= 0 or T < 1:
        raise ValueError("need m > 0 and T >= 1")
    return math.sqrt(m / (3.0 * T))


def stability_threshold(K, d):
    """Largest Tsallis rate for which one-step probabilities at most double."""
    return (1.0 - 1.0 / math.sqrt(2.0)) / (2.0 ** (1.5 * d) * math.sqrt(K))


def dftrl_eta(T, K, alpha, N):
    return E_FACTOR * (alpha / N + 1.0 / K) ** -0.25 * math.sqrt(2.0 / T)


def dftrl_zeta(t, K, d):
    return math.sqrt(math.log(K) / (d * t))


def dftrl_schedules(t, T, K, d, alpha, N):
    """``(eta_t, zeta_t)`` for round ``t``; ``eta_t`` is constant in ``t``."""
    if t < 1 or min(T, K, d, alpha, N) <= 0:
        raise ValueError("all schedule parameters must be positive")
    return dftrl_eta(T, K, alpha, N), dftrl_zeta(t, K, d)


def exp3coop_rate(T, K, alpha, N):
    return math.sqrt(math.log(K) / ((alpha / N + 1.0 / K) * K * T))


def center_exp3_rate(T, K, neighborhood_size):
    return math.sqrt(math.log(K) * neighborhood_size / (K * T))


# --- plan ------------------------------------------------------------------


@dataclass(frozen=True)
class PolicyOptions:
    cftrl_rate: str = "neighborhood"  # or "mass"
    stability_clamp: bool = False

    def __post_init__(self):
        if self.cftrl_rate not in ("neighborhood", "mass"):
            raise ValueError(f"unknown cftrl_rate {self.cftrl_rate!r}")


@dataclass(frozen=True)
class PolicyPlan:
    algorithm: str
    K: int
    T: int
    d: int
    kinds: np.ndarray  # (N,) int8
    eta: np.ndarray  # (N,) per-agent rate; nan for followers and hybrid agents
    center_of: np.ndarray  # (N,)
    lag: np.ndarray  # (N,) copy lag d(v) * d for followers, 0 otherwise
    hybrid_eta: float = float("nan")
    alpha: int | None = None
    alpha_exact: bool = True
    assignment: CenterAssignment | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_agents(self):
        return int(self.kinds.size)


def plan_policies(algorithm, graph, K, T, options=None):
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    if K < 2:
        raise ValueError("need K >= 2")
    if T < 1:
        raise ValueError("need T >= 1")
    options = options or PolicyOptions()
    n, d = graph.n_agents, graph.edge_delay
    kinds = np.empty(n, dtype=np.int8)
    eta = np.full(n, np.nan)
    center_of = np.arange(n)
    lag = np.zeros(n, dtype=np.int64)
    alpha, exact, assignment, hybrid_eta = None, True, None, float("nan")
    cap = stability_threshold(K, d) if options.stability_clamp else math.inf

    if algorithm in ("cftrl", "center_exp3"):
        assignment = select_centers(graph, K)
        center_of = np.array(assignment.center_of)
        for v in range(n):
            c = assignment.center_of[v]
            if c != v:
                kinds[v] = FOLLOWER
                lag[v] = assignment.dist[v] * d
                continue
            size = graph.degree(v) + 1
            if algorithm == "cftrl":
                kinds[v] = TSALLIS
                m = size if options.cftrl_rate == "neighborhood" else assignment.mass[v]
                eta[v] = min(cftrl_learning_rate(m, T), cap)
            else:
                kinds[v] = EXP
                eta[v] = center_exp3_rate(T, K, size)
    else:
        alpha, exact = independence_number(graph, return_exact=True)
        if algorithm == "dftrl":
            kinds[:] = HYBRID
            hybrid_eta = min(dftrl_eta(T, K, alpha, n), cap)
        else:
            kinds[:] = EXP
            eta[:] = exp3coop_rate(T, K, alpha, n)
    return PolicyPlan(
        algorithm, K, T, d, kinds, eta, center_of, lag, hybrid_eta, alpha, exact, assignment,
        {"options": {"cftrl_rate": options.cftrl_rate, "stability_clamp": options.stability_clamp}},
    )


# --- act rules -------------------------------------------------------------------


def _uniform(K):
    return np.full(K, 1.0 / K)


def cftrl_center_act(state, t):
    if state.cum.last_applied_round != t - 1:
        raise ProtocolError(f"center estimator at {state.cum.last_applied_round}, act at {t}")
    p = np.empty(state.cum.values.size)
    _, ok = _tsallis(state.cum.values, state.eta, p)
    if not ok:
        raise SolverError("Tsallis step did not converge")
    return p


def dftrl_act(state, t):
    if state.cum.last_applied_round != t - 1:
        raise ProtocolError(f"estimator at {state.cum.last_applied_round}, act at {t}")
    p = np.empty(state.cum.values.size)
    lam, ok = _hybrid(state.cum.values, state.eta, dftrl_zeta(t, state.K, state.d), p, state.lam)
    if not ok:
        raise SolverError("hybrid step did not converge")
    # warm start for the next round
    state.lam = lam
    return p


def exp3_coop_act(state, t):
    if state.cum.last_applied_round != t - 1:
        raise ProtocolError(f"estimator at {state.cum.last_applied_round}, act at {t}")
    p = np.empty(state.cum.values.size)
    _exp_weights(state.cum.values, state.eta, p)
    return p


def cftrl_follower_act(state, t):
    if t <= state.lag:
        return _uniform(state.K)
    try:
        return state.history[t - state.lag]
    except KeyError:
        raise ProtocolError(
            f"follower {state.agent} misses center {state.center} round {t - state.lag}"
        ) from None


def center_exp3_act(state, t):
    if isinstance(state, Follower):
        return cftrl_follower_act(state, t)
    return exp3_coop_act(state, t)


# --- policy objects ----------------------------------------------------------------


class Policy:
    """Base class; ``estimates`` tells the engine to feed ``observe``."""

    estimates = True

    def __init__(self, agent, K, d):
        self.agent = agent
        self.K = K
        self.d = d

    def act(self, t):
        raise NotImplementedError

    def observe(self, t, snapshot):
        pass

    def relay(self, s, probs):
        pass


class EstimatingPolicy(Policy):
    def __init__(self, agent, K, d, eta, rule):
        super().__init__(agent, K, d)
        self.eta = eta
        self.cum = ObservedCumLoss.zeros(K)
        self._rule = rule
        self.last_increment = np.zeros(K)
        self.lam = math.nan

    def act(self, t):
        return self._rule(self, t)

    def observe(self, t, snapshot):
        before = self.cum.values.copy()
        update_estimate(self.cum, snapshot, t, self.d)
        self.last_increment = self.cum.values - before


class Follower(Policy):
    estimates = False

    def __init__(self, agent, K, d, center, lag):
        super().__init__(agent, K, d)
        self.center = center
        self.lag = lag
        self.history = {}

    def act(self, t):
        return cftrl_follower_act(self, t)

    def relay(self, s, probs):
        self.history[s] = probs
        # only the entry for the current round is ever read again
        self.history.pop(s - 1, None)


def build_policies(plan):
    rules = {TSALLIS: cftrl_center_act, HYBRID: dftrl_act, EXP: exp3_coop_act}
    out = []
    for v in range(plan.n_agents):
        kind = int(plan.kinds[v])
        if kind == FOLLOWER:
            out.append(Follower(v, plan.K, plan.d, int(plan.center_of[v]), int(plan.lag[v])))
        else:
            eta = plan.hybrid_eta if kind == HYBRID else float(plan.eta[v])
            out.append(EstimatingPolicy(v, plan.K, plan.d, eta, rules[kind]))
    return out

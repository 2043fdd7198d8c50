"""Synchronous round engine with delayed message delivery.

Round ``t`` runs, in order: followers receive relayed center distributions due
at ``t``; every agent computes ``p_t``; the environment reveals ``loss_t``;
agents sample arms and record losses; reports ``<v, t, arm, loss, p_t>`` are
queued to every closed neighbor for delivery at ``t + d``; finally the reports
due at ``t`` (sent at ``t - d``) are applied to the estimators, which makes
them visible to ``p_{t+1}`` onwards.

Two engines implement this schedule. ``"reference"`` drives the policy objects
of :mod:`coopftrl.policies` and an explicit message queue; ``"fast"`` is a
jitted loop over ring buffers. They share the solver, weighting and sampling
kernels and produce identical traces.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .estimation import NeighborhoodSnapshot, Observation, ProtocolError, _apply_round
from .graphs import CommGraph
from .policies import (
    EXP,
    FOLLOWER,
    HYBRID,
    TSALLIS,
    PolicyOptions,
    build_policies,
    plan_policies,
)
from .solvers import _exp_weights, _hybrid, _tsallis


class ConfigError(ValueError):
    pass


# --- environments ------------------------------------------------------------------


def bernoulli_means(K):
    """Arm means ``(1 + 8(i-1)/(K-1)) / 10``, arithmetic from 0.1 to 0.9."""
    if K < 2:
        raise ConfigError("need K >= 2 arms")
    return np.array([(1.0 + 8.0 * i / (K - 1)) / 10.0 for i in range(K)])


class BernoulliEnvironment:
    """Stochastic losses, one draw per (round, arm) shared by all agents."""

    def __init__(self, K, means=None):
        self.K = K
        self.means = bernoulli_means(K) if means is None else np.asarray(means, dtype=float)

    def loss_matrix(self, T, seed):
        rng = np.random.default_rng([seed, 0])
        return (rng.random((T, self.K)) < self.means).astype(np.float64)


class TableEnvironment:
    """Oblivious adversary given as a fixed ``(T, K)`` table."""

    means = None

    def __init__(self, table):
        table = np.asarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] < 2:
            raise ConfigError("loss table must be (T, K) with K >= 2")
        if not np.all((table >= 0) & (table <= 1)):
            raise ConfigError("losses must lie in [0, 1]")
        self.table = table
        self.K = table.shape[1]

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            K = len(header) - 1
            if header[0] != "t" or header[1:] != [f"loss_{i}" for i in range(1, K + 1)]:
                raise ConfigError(f"bad loss file header: {header}")
            rows = []
            for n, row in enumerate(reader, start=1):
                if int(row[0]) != n:
                    raise ConfigError(f"loss file rows must be t = 1, 2, ...; got {row[0]}")
                rows.append([float(x) for x in row[1:]])
        return cls(rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"loss_{i}" for i in range(1, self.K + 1)])
            for t, row in enumerate(self.table, start=1):
                w.writerow([t] + [repr(float(x)) for x in row])

    def loss_matrix(self, T, seed):
        if T > self.table.shape[0]:
            raise ConfigError(f"loss table has {self.table.shape[0]} rounds, need {T}")
        return self.table[:T].copy()


def agent_uniforms(n, T, seed):
    """Per-agent sampling uniforms; agent ``v`` owns stream ``[seed, 1, v]``."""
    return np.stack([np.random.default_rng([seed, 1, v]).random(T) for v in range(n)])


@njit(cache=True)
def _sample(p, u):
    """Inverse-CDF draw."""
    acc = 0.0
    for i in range(p.size):
        acc += p[i]
        if u < acc:
            return i
    return p.size - 1


# --- regret and communication ------------------------------------------------------


def empirical_regret(arms, losses):
    """Per-agent ``R_t^v`` and their average, from traces.

    ``R_t^v = sum_{s<=t} loss_s(I_s(v)) - min_i sum_{s<=t} loss_s(i)``.
    """
    arms = np.asarray(arms)
    losses = np.asarray(losses, dtype=np.float64)
    T = losses.shape[0]
    incurred = losses[np.arange(T)[None, :], arms]
    best = np.cumsum(losses, axis=0).min(axis=1)
    per_agent = np.cumsum(incurred, axis=1) - best[None, :]
    return per_agent, per_agent.mean(axis=0)


def pseudo_regret(arms, means):
    means = np.asarray(means, dtype=np.float64)
    per_agent = np.cumsum(means[np.asarray(arms)] - means.min(), axis=1)
    return per_agent, per_agent.mean(axis=0)


def message_bits(N, T, K):
    """Bits of one report: id, round, arm, loss and K probabilities at 64 bits."""
    lg = lambda x: math.ceil(math.log2(x)) if x > 1 else 0
    return lg(N) + lg(T) + lg(K) + 64 * (K + 1)


def comm_cost(graph, T, K, senders=None):
    """Bits moved in one round: each sender's report crosses each of its edges.

    ``senders`` defaults to all agents.
    """
    b = message_bits(graph.n_agents, T, K)
    senders = range(graph.n_agents) if senders is None else senders
    return sum(graph.degree(u) * b for u in senders)


# --- engines -------------------------------------------------------------------------


def _closed_csr(graph):
    indptr = [0]
    indices = []
    for v in range(graph.n_agents):
        indices.extend(sorted(set(graph.adjacency[v]) | {v}))
        indptr.append(len(indices))
    return np.array(indptr, dtype=np.int64), np.array(indices, dtype=np.int64)


@dataclass
class Trace:
    arms: np.ndarray  # (N, T)
    probs: np.ndarray | None = None  # (N, T, K) when recorded
    increments: np.ndarray | None = None  # (N, T, K); row t applied at end of round t


def simulate_reference(plan, graph, losses, uniforms, record=False):
    N, K, d = graph.n_agents, plan.K, graph.edge_delay
    T = losses.shape[0]
    policies = build_policies(plan)
    arms = np.zeros((N, T), dtype=np.int64)
    probs = np.zeros((N, T, K)) if record else None
    incs = np.zeros((N, T, K)) if record else None
    inbox = defaultdict(lambda: defaultdict(list))  # deliver round -> agent -> reports
    relays = defaultdict(list)  # deliver round -> (follower, send round, probs)
    followers = defaultdict(list)
    for pol in policies:
        if not pol.estimates:
            followers[pol.center].append(pol)

    for t in range(1, T + 1):
        for f, s, p in relays.pop(t, ()):
            f.relay(s, p)
        dists = [pol.act(t) for pol in policies]
        row = losses[t - 1]
        for v, pol in enumerate(policies):
            a = _sample(dists[v], uniforms[v, t - 1])
            arms[v, t - 1] = a
            obs = Observation(v, t, a, float(row[a]), dists[v])
            for u in graph.adjacency[v]:
                inbox[t + d][u].append(obs)
            inbox[t + d][v].append(obs)
            for f in followers.get(v, ()):
                relays[t + f.lag].append((f, t, dists[v]))
            if record:
                probs[v, t - 1] = dists[v]
        due = inbox.pop(t, {})
        for v, pol in enumerate(policies):
            if not pol.estimates:
                continue
            snapshot = None
            if t > d:
                entries = sorted(due.get(v, ()), key=lambda o: o.agent)
                if any(o.round > t - d for o in entries):
                    raise ProtocolError("report delivered before its delay elapsed")
                snapshot = NeighborhoodSnapshot(t - d, tuple(entries))
            pol.observe(t, snapshot)
            if record:
                incs[v, t - 1] = pol.last_increment
    return Trace(arms, probs, incs)


@njit(cache=True)
def _fast_loop(kinds, eta, hybrid_eta, log_k, d, center_of, lag, indptr, indices,
               losses, uniforms, record, arms, probs, incs):
    N = kinds.size
    T, K = losses.shape
    R = d
    for v in range(N):
        if lag[v] > R:
            R = lag[v]
    R += 1
    P = np.zeros((R, N, K))
    A = np.zeros((R, N), dtype=np.int64)
    Lo = np.zeros((R, N))
    cum = np.zeros((N, K))
    lam = np.full(N, np.nan)
    before = np.zeros(K)
    ok = True
    for t in range(1, T + 1):
        slot = t % R
        for v in range(N):
            p = P[slot, v]
            k = kinds[v]
            if k == FOLLOWER:
                if t <= lag[v]:
                    for i in range(K):
                        p[i] = 1.0 / K
                else:
                    src = P[(t - lag[v]) % R, center_of[v]]
                    for i in range(K):
                        p[i] = src[i]
            elif k == TSALLIS:
                _, good = _tsallis(cum[v], eta[v], p)
                ok = ok and good
            elif k == HYBRID:
                lam[v], good = _hybrid(cum[v], hybrid_eta, math.sqrt(log_k / (d * t)), p, lam[v])
                ok = ok and good
            else:
                _exp_weights(cum[v], eta[v], p)
        for v in range(N):
            a = _sample(P[slot, v], uniforms[v, t - 1])
            arms[v, t - 1] = a
            A[slot, v] = a
            Lo[slot, v] = losses[t - 1, a]
            if record:
                probs[v, t - 1] = P[slot, v]
        if t > d:
            s = (t - d) % R
            for v in range(N):
                if kinds[v] == FOLLOWER:
                    continue
                if record:
                    before[:] = cum[v]
                nb = indices[indptr[v]:indptr[v + 1]]
                Pn = np.empty((nb.size, K))
                an = np.empty(nb.size, dtype=np.int64)
                ln = np.empty(nb.size)
                for j in range(nb.size):
                    Pn[j] = P[s, nb[j]]
                    an[j] = A[s, nb[j]]
                    ln[j] = Lo[s, nb[j]]
                _apply_round(cum[v], Pn, an, ln)
                if record:
                    incs[v, t - 1] = cum[v] - before
    return ok


def simulate_fast(plan, graph, losses, uniforms, record=False):
    N = graph.n_agents
    T, K = losses.shape
    indptr, indices = _closed_csr(graph)
    arms = np.zeros((N, T), dtype=np.int64)
    shape = (N, T, K) if record else (1, 1, 1)
    probs, incs = np.zeros(shape), np.zeros(shape)
    eta = np.where(np.isnan(plan.eta), 1.0, plan.eta)
    hybrid_eta = plan.hybrid_eta if math.isfinite(plan.hybrid_eta) else 1.0
    ok = _fast_loop(
        plan.kinds.astype(np.int64), eta, hybrid_eta, math.log(K), graph.edge_delay,
        plan.center_of.astype(np.int64), plan.lag.astype(np.int64), indptr, indices,
        np.ascontiguousarray(losses), np.ascontiguousarray(uniforms), record, arms, probs, incs,
    )
    if not ok:
        raise ArithmeticError("FTRL step did not converge inside the fast engine")
    return Trace(arms, probs if record else None, incs if record else None)


ENGINES = {"reference": simulate_reference, "fast": simulate_fast}


# --- runs ------------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    graph: CommGraph
    K: int
    T: int
    algorithm: str
    seed: int = 0
    regret_mode: str = "pseudo"  # or "empirical"
    options: PolicyOptions = PolicyOptions()
    loss_table: np.ndarray | None = field(default=None, compare=False)
    engine: str = "fast"
    record: bool = False

    def validate(self):
        if self.T < 1:
            raise ConfigError("horizon T must be >= 1")
        if self.K < 2:
            raise ConfigError("need K >= 2 arms")
        if self.regret_mode not in ("pseudo", "empirical"):
            raise ConfigError(f"unknown regret mode {self.regret_mode!r}")
        if self.engine not in ENGINES:
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.loss_table is not None and self.regret_mode == "pseudo":
            raise ConfigError("pseudo regret needs a stochastic environment")

    def environment(self):
        if self.loss_table is None:
            return BernoulliEnvironment(self.K)
        env = TableEnvironment(self.loss_table)
        if env.K != self.K:
            raise ConfigError(f"loss table has {env.K} arms, config says {self.K}")
        return env

    def digest(self):
        blob = json.dumps(
            {
                "edges": self.graph.edges(), "n": self.graph.n_agents, "d": self.graph.edge_delay,
                "K": self.K, "T": self.T, "algorithm": self.algorithm, "seed": self.seed,
                "regret_mode": self.regret_mode, "options": asdict(self.options),
            },
            sort_keys=True,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class RunResult:
    arms: np.ndarray  # (N, T)
    incurred: np.ndarray  # (N, T)
    regret: np.ndarray  # (N, T) cumulative per agent
    avg_regret: np.ndarray  # (T,)
    comm_bits: np.ndarray  # (T,)
    meta: dict
    trace: Trace | None = None


def run(config):
    config.validate()
    graph, K, T = config.graph, config.K, config.T
    env = config.environment()
    plan = plan_policies(config.algorithm, graph, K, T, config.options)
    losses = env.loss_matrix(T, config.seed)
    uniforms = agent_uniforms(graph.n_agents, T, config.seed)
    trace = ENGINES[config.engine](plan, graph, losses, uniforms, record=config.record)
    if config.regret_mode == "pseudo":
        regret, avg = pseudo_regret(trace.arms, env.means)
    else:
        regret, avg = empirical_regret(trace.arms, losses)
    incurred = losses[np.arange(T)[None, :], trace.arms]
    bits = np.full(T, comm_cost(graph, T, K), dtype=np.int64)
    meta = {
        "config_hash": config.digest(),
        "seed": config.seed,
        "algorithm": config.algorithm,
        "alpha": plan.alpha,
        "alpha_exact": plan.alpha_exact,
        "assignment": plan.assignment.to_dict() if plan.assignment else None,
        "eta": [None if math.isnan(x) else float(x) for x in plan.eta],
        "hybrid_eta": None if math.isnan(plan.hybrid_eta) else plan.hybrid_eta,
        "graph": graph.meta,
    }
    return RunResult(trace.arms, incurred, regret, avg, bits, meta,
                     trace if config.record else None)

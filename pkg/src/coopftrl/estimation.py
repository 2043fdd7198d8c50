"""Neighborhood-aggregated importance weights and the delayed cumulative
loss estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


class ProtocolError(RuntimeError):
    """Messages arrived out of order or a required payload is missing."""


@dataclass(frozen=True)
class Observation:
    """One agent's report for one round: chosen arm, its loss, its distribution."""

    agent: int
    round: int
    arm: int
    loss: float
    probs: np.ndarray


@dataclass(frozen=True)
class NeighborhoodSnapshot:
    round: int
    entries: tuple[Observation, ...]

    def __post_init__(self):
        for e in self.entries:
            if e.round != self.round:
                raise ProtocolError(f"entry from round {e.round} in snapshot of round {self.round}")
            if not 0.0 <= e.loss <= 1.0:
                raise ValueError(f"loss {e.loss} outside [0, 1]")


@njit(cache=True)
def _aggregate_q(P, i):
    """``1 - prod_u (1 - P[u, i])`` evaluated as ``-expm1(sum log1p(-P[u, i]))``,
    clamped below by ``max_u P[u, i]``."""
    acc = 0.0
    pmax = 0.0
    for u in range(P.shape[0]):
        pu = P[u, i]
        if pu > pmax:
            pmax = pu
        if pu >= 1.0 - 1e-12:
            return 1.0
        acc += math.log1p(-pu)
    q = -math.expm1(acc)
    if q < pmax:
        q = pmax
    if q > 1.0:
        q = 1.0
    return q


@njit(cache=True)
def _apply_round(cum, P, arms, losses):
    """Add ``loss / q`` once for every arm chosen in the neighborhood.

    ``P`` holds the neighbors' distributions (rows), ``arms``/``losses`` their
    choices, all from the same past round.
    """
    K = cum.size
    seen = np.zeros(K, dtype=np.bool_)
    for u in range(arms.size):
        i = arms[u]
        if seen[i]:
            continue
        seen[i] = True
        cum[i] += losses[u] / _aggregate_q(P, i)


def aggregate_importance_weight(dists, i):
    """Probability that at least one agent in the neighborhood plays arm ``i``."""
    P = np.atleast_2d(np.asarray(dists, dtype=np.float64))
    if P.shape[0] == 0 or P.size == 0:
        raise ValueError("empty neighborhood")
    return _aggregate_q(np.ascontiguousarray(P), int(i))


def aggregate_importance_weights(dists):
    """Vector form of :func:`aggregate_importance_weight` over all arms."""
    P = np.ascontiguousarray(np.atleast_2d(np.asarray(dists, dtype=np.float64)))
    if P.shape[0] == 0:
        raise ValueError("empty neighborhood")
    return np.array([_aggregate_q(P, i) for i in range(P.shape[1])])


def batch_increments(arms, loss_vector, q):
    """Estimator increments for many independent joint draws at once.

    ``arms`` has shape ``(samples, agents)``; returns ``(samples, K)`` with
    ``loss[i] / q[i]`` where some agent chose ``i`` and zero elsewhere.
    """
    arms = np.asarray(arms)
    loss_vector = np.asarray(loss_vector, dtype=np.float64)
    K = loss_vector.size
    hit = np.zeros((arms.shape[0], K), dtype=bool)
    rows = np.repeat(np.arange(arms.shape[0]), arms.shape[1])
    hit[rows, arms.ravel()] = True
    return np.where(hit, loss_vector / np.asarray(q, dtype=np.float64), 0.0)


@dataclass
class ObservedCumLoss:
    """Cumulative importance-weighted loss estimate of one agent.

    ``last_applied_round`` is the round ``t`` whose increment was applied last;
    that increment carries data from round ``t - d``.
    """

    values: np.ndarray
    last_applied_round: int = 0

    @classmethod
    def zeros(cls, K):
        return cls(np.zeros(K))

    def copy(self):
        return ObservedCumLoss(self.values.copy(), self.last_applied_round)


def update_estimate(state, snapshot, t, d):
    """Apply the round-``t`` increment built from round ``t - d`` reports.

    ``snapshot`` must be ``None`` for ``t <= d``. The state is updated in place
    and returned.
    """
    if state.last_applied_round != t - 1:
        raise ProtocolError(
            f"estimator at round {state.last_applied_round}, cannot apply round {t}"
        )
    if t > d:
        if snapshot is None or snapshot.round != t - d:
            got = None if snapshot is None else snapshot.round
            raise ProtocolError(f"round {t} needs reports from {t - d}, got {got}")
        if snapshot.entries:
            P = np.ascontiguousarray(np.stack([e.probs for e in snapshot.entries]))
            arms = np.array([e.arm for e in snapshot.entries], dtype=np.int64)
            losses = np.array([e.loss for e in snapshot.entries], dtype=np.float64)
            _apply_round(state.values, P, arms, losses)
    state.last_applied_round = t
    return state

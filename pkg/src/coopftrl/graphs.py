"""Communication graphs, independence numbers and center assignment."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphError(ValueError):
    """Invalid graph parameters or malformed graph data."""


@dataclass(frozen=True)
class CommGraph:
    """Undirected connected agent graph with a uniform edge delay.

    ``adjacency[v]`` is the sorted tuple of neighbors of ``v`` (no self loops).
    """

    n_agents: int
    adjacency: tuple[tuple[int, ...], ...]
    edge_delay: int = 1
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_agents < 1:
            raise GraphError("graph needs at least one agent")
        if len(self.adjacency) != self.n_agents:
            raise GraphError("adjacency size does not match n_agents")
        if self.edge_delay < 1:
            raise GraphError("edge delay must be >= 1")
        for v, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise GraphError(f"adjacency of {v} must be sorted and unique")
            for u in nbrs:
                if u == v:
                    raise GraphError(f"self loop at {v}")
                if not 0 <= u < self.n_agents or v not in self.adjacency[u]:
                    raise GraphError(f"edge ({v}, {u}) is not symmetric")
        if not _is_connected(self.adjacency):
            raise GraphError("graph is not connected")

    @classmethod
    def from_edges(cls, n, edges, edge_delay=1, meta=None):
        nbrs = [set() for _ in range(n)]
        for u, v in edges:
            if u == v:
                raise GraphError(f"self loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        return cls(n, adjacency, edge_delay, dict(meta or {}))

    def edges(self):
        """Edges as sorted ``(u, v)`` pairs with ``u < v``."""
        return [(u, v) for u in range(self.n_agents) for v in self.adjacency[u] if u < v]

    def degree(self, v):
        return len(self.adjacency[v])

    def with_delay(self, edge_delay):
        return CommGraph(self.n_agents, self.adjacency, edge_delay, dict(self.meta))

    def to_edgelist(self):
        lines = [f"{self.n_agents} {self.edge_delay}"]
        lines += [f"{u} {v}" for u, v in self.edges()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_edgelist(cls, text):
        rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
        if not rows or len(rows[0]) != 2:
            raise GraphError("edge list must start with a 'N d' header")
        n, d = int(rows[0][0]), int(rows[0][1])
        edges = []
        for row in rows[1:]:
            if len(row) != 2:
                raise GraphError(f"malformed edge line: {' '.join(row)!r}")
            u, v = int(row[0]), int(row[1])
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range")
            edges.append((u, v))
        return cls.from_edges(n, edges, d)

    def save(self, path):
        Path(path).write_text(self.to_edgelist())

    @classmethod
    def load(cls, path):
        return cls.from_edgelist(Path(path).read_text())


def _is_connected(adjacency):
    n = len(adjacency)
    seen = {0}
    queue = deque([0])
    while queue:
        v = queue.popleft()
        for u in adjacency[v]:
            if u not in seen:
                seen.add(u)
                queue.append(u)
    return len(seen) == n


def bfs_distances(graph, source):
    """Hop distances from ``source`` to every agent."""
    dist = [-1] * graph.n_agents
    dist[source] = 0
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for u in graph.adjacency[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def single_agent(edge_delay=1):
    """The trivial one-agent graph (no edges)."""
    return CommGraph(1, ((),), edge_delay, {"type": "single"})


def build_regular(n, r, seed=0, edge_delay=1, max_attempts=100_000):
    """Connected random r-regular graph via the pairing model.

    Outcomes with self loops, multi-edges or several components are rejected
    and the draw is repeated with ``seed + 1``.
    """
    if not 2 <= r < n:
        raise GraphError(f"r-regular graph needs 2 <= r < N, got r={r}, N={n}")
    if (r * n) % 2:
        raise GraphError(f"r*N must be even, got r={r}, N={n}")
    points = np.repeat(np.arange(n), r)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        pairs = rng.permutation(points).reshape(-1, 2)
        u, v = pairs[:, 0], pairs[:, 1]
        if np.any(u == v):
            continue
        keys = np.minimum(u, v) * n + np.maximum(u, v)
        if np.unique(keys).size != keys.size:
            continue
        edges = list(zip(u.tolist(), v.tolist()))
        try:
            return CommGraph.from_edges(
                n, edges, edge_delay,
                {"type": "regular", "r": r, "seed": seed, "seed_used": seed + attempt},
            )
        except GraphError:
            continue
    raise GraphError(f"no connected {r}-regular graph on {n} nodes after {max_attempts} draws")


def build_star(n, edge_delay=1):
    """Star with hub 0."""
    if n < 2:
        raise GraphError(f"star graph needs N >= 2, got {n}")
    return CommGraph.from_edges(n, [(0, v) for v in range(1, n)], edge_delay, {"type": "star"})


def erdos_renyi_probability(n):
    return 2.0 * math.log(n) / n


def build_erdos_renyi(n, seed=0, edge_delay=1, max_attempts=100_000):
    """Erdos-Renyi graph with p = 2 ln(N)/N, redrawn until connected."""
    if n < 2:
        raise GraphError(f"Erdos-Renyi graph needs N >= 2, got {n}")
    p = erdos_renyi_probability(n)
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(max_attempts):
        rng = np.random.default_rng(seed + attempt)
        keep = rng.random(iu.size) < p
        edges = list(zip(iu[keep].tolist(), ju[keep].tolist()))
        try:
            return CommGraph.from_edges(
                n, edges, edge_delay,
                {"type": "erdos_renyi", "p": p, "seed": seed, "seed_used": seed + attempt},
            )
        except GraphError:
            continue
    raise GraphError(f"no connected Erdos-Renyi graph on {n} nodes after {max_attempts} draws")


def closed_neighborhood(graph, v):
    if not 0 <= v < graph.n_agents:
        raise GraphError(f"invalid agent id {v}")
    return frozenset(graph.adjacency[v]) | {v}


# --- independence number -------------------------------------------------

EXACT_MIS_LIMIT = 30


def _mis_exact(masks):
    """Maximum independent set size by branch and bound on bitmasks."""
    best = 0

    def popcount(x):
        return bin(x).count("1")

    def expand(cand, size):
        nonlocal best
        if cand == 0:
            best = max(best, size)
            return
        if size + popcount(cand) <= best:
            return
        # vertex of minimum degree inside cand: branching on it and its
        # neighbors is enough since a maximum set contains one of them
        v_min, deg_min = -1, 1 << 30
        c = cand
        while c:
            low = c & -c
            v = low.bit_length() - 1
            deg = popcount(masks[v] & cand)
            if deg < deg_min:
                v_min, deg_min = v, deg
                if deg <= 1:
                    break
            c ^= low
        branch = (masks[v_min] & cand) | (1 << v_min)
        while branch:
            low = branch & -branch
            u = low.bit_length() - 1
            expand(cand & ~(masks[u] | (1 << u)), size + 1)
            branch ^= low
            if size + popcount(cand) <= best:
                return

    expand((1 << len(masks)) - 1, 0)
    return best


def independence_number_greedy(graph):
    """Greedy minimum-degree lower bound on the independence number."""
    alive = set(range(graph.n_agents))
    adj = [set(a) for a in graph.adjacency]
    size = 0
    while alive:
        v = min(alive, key=lambda x: (len(adj[x] & alive), x))
        size += 1
        alive -= adj[v] | {v}
    return size


def independence_number(graph, return_exact=False):
    """Independence number; exact for N <= 30, greedy lower bound beyond.

    With ``return_exact=True`` returns ``(alpha, is_exact)``.
    """
    if graph.n_agents <= EXACT_MIS_LIMIT:
        masks = [sum(1 << u for u in nbrs) for nbrs in graph.adjacency]
        alpha, exact = _mis_exact(masks), True
    else:
        alpha, exact = independence_number_greedy(graph), False
    return (alpha, exact) if return_exact else alpha


# --- centers -----------------------------------------------------------------


@dataclass(frozen=True)
class CenterAssignment:
    centers: tuple[int, ...]
    center_of: tuple[int, ...]
    dist: tuple[int, ...]
    mass: tuple[float, ...]
    radius: int

    def is_center(self, v):
        return self.center_of[v] == v

    def members(self, c):
        return [v for v, cv in enumerate(self.center_of) if cv == c]

    def to_dict(self):
        return {
            "centers": list(self.centers),
            "center_of": list(self.center_of),
            "dist": list(self.dist),
            "mass": list(self.mass),
            "radius": self.radius,
        }


def center_radius(K):
    return max(1, math.ceil(6.0 * math.log(K)))


def center_mass(neighborhood_size, K):
    return float(min(neighborhood_size, K))


def mass(assignment, v):
    """Mass of agent ``v``: capped neighborhood size at centers, discounted by
    ``exp(-hops/6)`` at followers."""
    c = assignment.center_of[v]
    if c != v:
        assert assignment.dist[v] > 0, "non-center at distance 0"
    return assignment.mass[v]


def select_centers(graph, K):
    """Greedy ball-growing center selection followed by a mass repair loop.

    Every agent ends up within ``max(1, ceil(6 ln K))`` hops of its center and
    has mass at least ``min(|N(v)|, K) / e``.
    """
    if K < 2:
        raise GraphError("need at least two arms")
    n = graph.n_agents
    radius = center_radius(K)
    dists = {}

    def dist_from(c):
        if c not in dists:
            dists[c] = bfs_distances(graph, c)
        return dists[c]

    center_of = [-1] * n
    hops = [0] * n
    # max degree first, lowest id on ties
    order = sorted(range(n), key=lambda v: (-graph.degree(v), v))
    for c in order:
        if center_of[c] >= 0:
            continue
        dc = dist_from(c)
        for v in range(n):
            if center_of[v] < 0 and dc[v] <= radius:
                center_of[v] = c
                hops[v] = dc[v]

    nsize = [graph.degree(v) + 1 for v in range(n)]

    def masses():
        return [
            math.exp(-hops[v] / 6.0) * center_mass(nsize[center_of[v]], K) for v in range(n)
        ]

    while True:
        m = masses()
        bad = [v for v in range(n) if m[v] < min(nsize[v], K) / math.e * (1 - 1e-12)]
        if not bad:
            break
        v = bad[0]
        center_of[v] = v
        hops[v] = 0
        dv = dist_from(v)
        for u in range(n):
            if center_of[u] != u and dv[u] < hops[u]:
                center_of[u] = v
                hops[u] = dv[u]

    centers = tuple(sorted({c for c in center_of}))
    return CenterAssignment(centers, tuple(center_of), tuple(hops), tuple(masses()), radius)

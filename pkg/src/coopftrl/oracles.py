"""Independent oracles: a reference simplex minimizer, the independence-number
inequality, the one-step stability bounds and estimator moment checks.

Nothing here calls into the root-finding kernels of :mod:`coopftrl.solvers`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .estimation import aggregate_importance_weights, batch_increments
from .graphs import closed_neighborhood, independence_number
from .policies import E_FACTOR, stability_threshold


class OracleFailure(RuntimeError):
    """The oracle itself could not certify its answer."""


@dataclass(frozen=True)
class OracleReport:
    check: str
    instance: str
    oracle: str
    implementation: str
    discrepancy: float
    tolerance: float
    note: str = ""

    @property
    def passed(self):
        return bool(self.discrepancy <= self.tolerance)

    def row(self):
        out = asdict(self)
        out["passed"] = self.passed
        return out


# --- reference minimizer ---------------------------------------------------------


@dataclass(frozen=True)
class Regularizer:
    """Separable regularizer ``sum f(p_i)`` with its first two derivatives."""

    name: str
    eta: float
    zeta: float = math.inf

    def value(self, p):
        v = 0.0
        if self.name in ("tsallis", "hybrid"):
            v += -2.0 * np.sum(np.sqrt(p)) / self.eta
        if self.name == "hybrid":
            v += np.sum(p * np.log(p)) / self.zeta
        if self.name == "negentropy":
            v += np.sum(p * np.log(p)) / self.eta
        return v

    def grad(self, p):
        g = np.zeros_like(p)
        if self.name in ("tsallis", "hybrid"):
            g += -1.0 / (self.eta * np.sqrt(p))
        if self.name == "hybrid":
            g += (np.log(p) + 1.0) / self.zeta
        if self.name == "negentropy":
            g += (np.log(p) + 1.0) / self.eta
        return g

    def hess(self, p):
        h = np.zeros_like(p)
        if self.name in ("tsallis", "hybrid"):
            h += 0.5 / (self.eta * p ** 1.5)
        if self.name == "hybrid":
            h += 1.0 / (self.zeta * p)
        if self.name == "negentropy":
            h += 1.0 / (self.eta * p)
        return h


def tsallis(eta):
    return Regularizer("tsallis", eta)


def hybrid(eta, zeta):
    return Regularizer("hybrid", eta, zeta)


def negentropy(eta):
    return Regularizer("negentropy", eta)


def project_simplex(y):
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(y - css[rho] / (rho + 1), 0.0)


def _floor(p, eps=1e-15):
    p = np.maximum(p, eps)
    return p / p.sum()


def kkt_residual(p, L, reg):
    r = L + reg.grad(p)
    return 0.5 * float(r.max() - r.min())


def pgd_argmin_oracle(L, reg, tol=1e-14, pgd_iters=100, newton_iters=200, certify=1e-8):
    """Minimize ``<p, L> + F(p)`` over the simplex.

    Projected gradient descent with diminishing Armijo steps brings the iterate
    near the optimum; tangent-space Newton steps then polish it until the
    objective stalls at relative precision ``tol``. The result is certified by
    its stationarity residual.
    """
    L = np.asarray(L, dtype=np.float64)
    K = L.size
    obj = lambda p: float(L @ p + reg.value(p))
    p = np.full(K, 1.0 / K)
    f = obj(p)
    step0 = 1.0 / float(reg.hess(p).max())
    for k in range(pgd_iters):
        g = L + reg.grad(p)
        step = step0 / math.sqrt(k + 1)
        while True:
            cand = _floor(project_simplex(p - step * g))
            fc = obj(cand)
            if fc <= f - 1e-4 * float(g @ (p - cand)) or step < 1e-300:
                break
            step *= 0.5
        change = f - fc
        p, f = cand, min(f, fc)
        if abs(change) <= tol * max(1.0, abs(f)):
            break

    for _ in range(newton_iters):
        g = L + reg.grad(p)
        h = reg.hess(p)
        mu = np.sum(g / h) / np.sum(1.0 / h)
        delta = -(g - mu) / h
        neg = delta < 0
        t = min(1.0, float(np.min(-0.5 * p[neg] / delta[neg]))) if neg.any() else 1.0
        decrement = float(-(g @ delta))
        while t > 1e-12:
            cand = p + t * delta
            cand = cand / cand.sum()
            fc = obj(cand)
            if fc <= f - 0.25 * t * decrement + 1e-15 * max(1.0, abs(f)):
                break
            t *= 0.5
        else:
            break
        change = f - fc
        p, f = cand, fc
        if decrement <= 2 * tol * max(1.0, abs(f)) or abs(change) <= tol * max(1.0, abs(f)):
            if kkt_residual(p, L, reg) <= certify:
                break

    res = kkt_residual(p, L, reg)
    if not res <= certify:
        raise OracleFailure(f"reference minimizer stalled with KKT residual {res:.3g}")
    return p


# --- inequalities -----------------------------------------------------------------


def independence_sides(graph, dists, K):
    """Left side ``sum_i sum_v p_v(i)^1.5 / q_v(i)`` and the right-hand bound."""
    dists = np.asarray(dists, dtype=np.float64)
    N = graph.n_agents
    lhs = 0.0
    for v in range(N):
        nb = sorted(closed_neighborhood(graph, v))
        q = aggregate_importance_weights(dists[nb])
        lhs += float(np.sum(dists[v] ** 1.5 / q))
    alpha = independence_number(graph)
    rhs = N * math.sqrt(E_FACTOR * (alpha / N + 1.0 / K) * K)
    return lhs, rhs


def independence_check(graph, dists, instance=""):
    dists = np.asarray(dists, dtype=np.float64)
    lhs, rhs = independence_sides(graph, dists, dists.shape[1])
    return OracleReport(
        "independence_inequality", instance, f"{rhs!r}", f"{lhs!r}",
        lhs / rhs - 1.0, 1e-12,
    )


def stability_check(probs, increments, eta, d, instance=""):
    """Check ``(1 - 3 eta inc_t(i)) p_t(i) <= p_{t+1}(i) <= 2 p_t(i)`` for all t, i.

    ``probs[t]`` is the distribution of round ``t + 1`` and ``increments[t]`` the
    estimator increment applied after it. Discrepancy is the worst relative
    violation (zero or negative when every bound holds).
    """
    probs = np.asarray(probs)
    increments = np.asarray(increments)
    K = probs.shape[1]
    p, nxt, inc = probs[:-1], probs[1:], increments[:-1]
    upper = nxt / (2.0 * p) - 1.0
    lower = ((1.0 - 3.0 * eta * inc) * p - nxt) / p
    worst = np.maximum(upper, lower)
    t, i = np.unravel_index(int(np.argmax(worst)), worst.shape)
    admissible = eta <= stability_threshold(K, d) * (1 + 1e-12)
    note = f"first worst at round {t + 1}, arm {i}"
    if not admissible:
        note += "; rate above the admissible threshold, bound not guaranteed"
    return OracleReport(
        "one_step_stability", instance, "p_next within bounds", f"max violation {float(worst.max())!r}",
        float(max(worst.max(), 0.0)), 1e-12, note,
    )


def estimator_moment_check(dists, loss_vector, samples=100_000, seed=0, instance=""):
    """Monte Carlo first and second moments of the one-round increment against
    ``loss`` and ``loss^2 / q``; discrepancy is the largest z-score."""
    if samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    dists = np.atleast_2d(np.asarray(dists, dtype=np.float64))
    loss_vector = np.asarray(loss_vector, dtype=np.float64)
    q = aggregate_importance_weights(dists)
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(dists, axis=1)
    u = rng.random((samples, dists.shape[0]))
    arms = np.stack(
        [np.minimum(np.searchsorted(cdf[a], u[:, a], side="right"), dists.shape[1] - 1)
         for a in range(dists.shape[0])],
        axis=1,
    )
    x = batch_increments(arms, loss_vector, q)
    worst = 0.0
    for vals, target in ((x, loss_vector), (x * x, loss_vector ** 2 / q)):
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(samples)
        gap = np.abs(mean - target)
        slack = 1e-12 * np.maximum(np.abs(target), 1.0)
        z = np.where(gap <= slack, 0.0, gap / np.where(se > 0, se, np.inf))
        z = np.where((se == 0) & (gap > slack), np.inf, z)
        worst = max(worst, float(z.max()))
    return OracleReport(
        "estimator_moments", instance, "mean=loss, second=loss^2/q", f"max z {worst:.3f}",
        worst, 4.0,
    )


# --- suite -----------------------------------------------------------------------------


def random_connected_graph(rng, n):
    """Random spanning tree plus a random share of the remaining edges."""
    from .graphs import CommGraph

    order = rng.permutation(n)
    edges = {tuple(sorted((int(order[k]), int(order[rng.integers(k)])))) for k in range(1, n)}
    extra = rng.uniform(0.0, 0.6)
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < extra:
                edges.add((u, v))
    return CommGraph.from_edges(n, sorted(edges))


def random_solver_instance(rng):
    K = int(rng.integers(2, 9))
    scale = float(rng.choice([1.0, 10.0, 100.0]))
    L = rng.uniform(0.0, scale, K)
    eta = float(10 ** rng.uniform(-2.0, 0.5))
    zeta = float(10 ** rng.uniform(-1.0, 1.0))
    return L, eta, zeta


def solver_reports(n=1000, seed=0):
    """Each solver against the reference minimizer, plus the solver's own
    stationarity residual, on ``n`` random instances."""
    from .solvers import hybrid_gradient, solve_hybrid, solve_tsallis, stationarity_residual
    from .solvers import tsallis_gradient

    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        L, eta, zeta = random_solver_instance(rng)
        tag = f"#{k} K={L.size} eta={eta:.4g} zeta={zeta:.4g}"
        p, _ = solve_tsallis(L, eta)
        o = pgd_argmin_oracle(L, tsallis(eta))
        out.append(OracleReport("tsallis_vs_reference", tag, "pgd", "newton",
                                float(np.abs(p - o).max()), 1e-6))
        out.append(OracleReport("tsallis_stationarity", tag, "0", "newton",
                                stationarity_residual(p, L, tsallis_gradient(eta)), 1e-9))
        p = solve_hybrid(L, eta, zeta)
        o = pgd_argmin_oracle(L, hybrid(eta, zeta))
        out.append(OracleReport("hybrid_vs_reference", tag, "pgd", "newton",
                                float(np.abs(p - o).max()), 1e-6))
        out.append(OracleReport("hybrid_stationarity", tag, "0", "newton",
                                stationarity_residual(p, L, hybrid_gradient(eta, zeta)), 1e-9))
    return out


def independence_reports(n=1000, seed=0, max_agents=12, max_arms=16):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        N = int(rng.integers(1, max_agents + 1))
        K = int(rng.integers(2, max_arms + 1))
        graph = random_connected_graph(rng, N)
        conc = float(10 ** rng.uniform(-1.0, 1.0))
        dists = rng.dirichlet(np.full(K, conc), size=N)
        dists = np.maximum(dists, 1e-12)
        dists /= dists.sum(axis=1, keepdims=True)
        out.append(independence_check(graph, dists, f"#{k} N={N} K={K}"))
    return out


def moment_reports(n=50, samples=100_000, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        K = int(rng.integers(2, 9))
        agents = int(rng.integers(1, 5))
        dists = rng.dirichlet(np.ones(K), size=agents)
        loss = rng.uniform(0.0, 1.0, K)
        out.append(estimator_moment_check(dists, loss, samples, seed + k, f"#{k} K={K} n={agents}"))
    return out


def stability_reports(T=10_000, K=10, seed=0):
    from .graphs import build_regular
    from .policies import PolicyOptions
    from .simulator import RunConfig, run

    g = build_regular(3, 2)
    res = run(RunConfig(g, K, T, "cftrl", seed=seed,
                        options=PolicyOptions(stability_clamp=True), record=True))
    out = []
    for v in res.meta["assignment"]["centers"]:
        out.append(stability_check(res.trace.probs[v], res.trace.increments[v],
                                   res.meta["eta"][v], g.edge_delay,
                                   f"triangle K={K} T={T} center={v}"))
    return out


def run_suite(quick=False, seed=0):
    scale = 10 if quick else 1
    reports = []
    reports += solver_reports(1000 // scale, seed)
    reports += independence_reports(1000 // scale, seed)
    reports += moment_reports(50 // scale, 100_000, seed)
    reports += stability_reports(10_000 // scale, seed=seed)
    return reports

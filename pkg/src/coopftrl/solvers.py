"""Exact FTRL argmin solvers over the probability simplex.

Three regularizers are supported:

* Tsallis (1/2-entropy): ``-2/eta * sum(sqrt(p))``
* hybrid: Tsallis plus ``sum(p log p) / zeta``
* negative entropy, i.e. exponential weights

The jitted kernels (``_tsallis``, ``_hybrid``, ``_exp_weights``) are shared by
the policy objects and the fast simulation engine so both produce bit-identical
distributions.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


class SolverError(ArithmeticError):
    """Root finding failed to converge."""


MAX_ITER = 200
SUM_TOL = 1e-12
EPS = 2.220446049250313e-16
_TINY_LOG = math.log(1e-300)


def _check_losses(L):
    L = np.ascontiguousarray(L, dtype=np.float64)
    if L.ndim != 1 or L.size < 1:
        raise ValueError("loss vector must be one-dimensional and non-empty")
    if not np.all(np.isfinite(L)):
        raise ValueError("loss vector contains non-finite entries")
    return L


def _check_rate(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be positive and finite, got {value}")


# --- Tsallis -------------------------------------------------------------


@njit(cache=True)
def _tsallis(L, eta, p_out):
    """Fill ``p_out`` and return ``(lam, ok)``.

    With ``x = eta * (L - min L)`` the multiplier ``mu = lam + eta * min L``
    solves ``S(mu) = sum (x + mu)^-2 = 1``; the root lies in ``[1, sqrt(K)]``.
    ``S`` is convex and decreasing, so Newton from ``mu = 1`` climbs monotonically
    to the root. The bracket guards against rounding.
    """
    K = L.size
    m = L.min()
    noise = 4.0 * K * EPS
    lo = 1.0
    hi = math.sqrt(K)
    mu = lo
    ok = False
    for _ in range(MAX_ITER):
        s = 0.0
        ds = 0.0
        for i in range(K):
            z = 1.0 / (eta * (L[i] - m) + mu)
            z2 = z * z
            s += z2
            ds += z2 * z
        f = s - 1.0
        if abs(f) <= noise:
            # the sum is exact up to rounding; further steps only chase noise
            ok = True
            break
        if f > 0.0:
            lo = mu
        else:
            hi = mu
        step = f / (2.0 * ds)
        if abs(step) <= 4e-16 * mu:
            ok = abs(f) <= SUM_TOL
            break
        nxt = mu + step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if nxt == mu:
            # rounding floor reached
            ok = abs(f) <= SUM_TOL
            break
        mu = nxt
    total = 0.0
    for i in range(K):
        z = 1.0 / (eta * (L[i] - m) + mu)
        p_out[i] = z * z
        total += p_out[i]
    if abs(total - 1.0) <= SUM_TOL:
        ok = True
    for i in range(K):
        p_out[i] /= total
    return mu - eta * m, ok


def solve_tsallis(L, eta):
    """Tsallis-regularized FTRL step.

    Returns ``(p, lam)`` with ``p[i] = (eta * L[i] + lam) ** -2`` summing to one.
    """
    L = _check_losses(L)
    _check_rate("eta", eta)
    p = np.empty_like(L)
    lam, ok = _tsallis(L, float(eta), p)
    if not ok:
        raise SolverError(f"Tsallis root finding did not converge (eta={eta})")
    return p, lam


# --- hybrid --------------------------------------------------------------


@njit(cache=True)
def _hybrid_inv(c, eta, zeta):
    """Solve ``g(x) = c`` for ``x`` in (1e-300, 1] with
    ``g(x) = -1/(eta sqrt x) + (log x + 1)/zeta``; returns ``log x``.

    Works in ``y = log x`` where ``g`` is concave and increasing: Newton from a
    point left of the root climbs without overshooting.
    """
    if -1.0 / eta + 1.0 / zeta <= c:
        return 0.0
    a = eta * (1.0 / zeta - c)
    # a > 1 is guaranteed here; every candidate start has g(y) <= c
    y = -2.0 * math.log(a)
    # root of the entropy part alone
    y = max(y, c * zeta - 1.0)
    if c < 0.0:
        # root of the Tsallis part alone, valid while log x <= -1
        yt = -2.0 * math.log(-c * eta)
        if yt <= -1.0:
            y = max(y, yt)
    if y < _TINY_LOG:
        y = _TINY_LOG
        if -math.exp(-0.5 * y) / eta + (y + 1.0) / zeta >= c:
            return y
    lo = y
    hi = 0.0
    for _ in range(MAX_ITER):
        e = math.exp(-0.5 * y)
        h = -e / eta + (y + 1.0) / zeta - c
        if h == 0.0:
            return y
        if h < 0.0:
            lo = y
        else:
            hi = y
        step = h / (0.5 * e / eta + 1.0 / zeta)
        if abs(step) <= 1e-15 * max(1.0, abs(y)):
            return min(y - step, 0.0)
        nxt = y - step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if nxt == y:
            return y
        y = nxt
    return y


@njit(cache=True)
def _hybrid(L, eta, zeta, p_out, lam0):
    """Fill ``p_out`` with the hybrid-regularized argmin; returns ``(lam, ok)``.

    Outer Newton on the multiplier ``lam`` (of the shifted losses
    ``L - min L``) for ``sum p(lam) = 1``; each ``p_i(lam) = g^-1(-(L_i - min L) - lam)``.
    ``sum p`` is convex decreasing in ``lam`` on the bracket, so Newton from the
    lower end is monotone, and from any point right of the root it lands left of
    it in one step. ``lam0`` (nan for none) is a warm start.
    """
    K = L.size
    m = L.min()
    noise = 4.0 * K * EPS
    g1 = -1.0 / eta + 1.0 / zeta
    gk = -math.sqrt(K) / eta + (1.0 - math.log(K)) / zeta
    lo = -g1
    hi = -gk
    lam = lo
    if lo < lam0 < hi:
        lam = lam0
    ok = False
    for _ in range(MAX_ITER):
        s = 0.0
        ds = 0.0
        for i in range(K):
            x = math.exp(_hybrid_inv(-(L[i] - m) - lam, eta, zeta))
            p_out[i] = x
            s += x
            ds += 1.0 / (0.5 / (eta * x * math.sqrt(x)) + 1.0 / (zeta * x))
        f = s - 1.0
        if abs(f) <= noise:
            # the sum is exact up to rounding; further steps only chase noise
            ok = True
            break
        if f > 0.0:
            lo = lam
        else:
            hi = lam
        step = f / ds
        if abs(step) <= 4e-16 * max(1.0, abs(lam)):
            ok = abs(f) <= SUM_TOL
            break
        nxt = lam + step
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if nxt == lam:
            ok = abs(f) <= SUM_TOL
            break
        lam = nxt
    total = 0.0
    for i in range(K):
        total += p_out[i]
    if abs(total - 1.0) <= SUM_TOL:
        ok = True
    for i in range(K):
        p_out[i] /= total
    return lam, ok


def solve_hybrid(L, eta, zeta):
    """Hybrid (Tsallis + negative entropy) FTRL step."""
    L = _check_losses(L)
    _check_rate("eta", eta)
    _check_rate("zeta", zeta)
    p = np.empty_like(L)
    _, ok = _hybrid(L, float(eta), float(zeta), p, math.nan)
    if not ok:
        raise SolverError(f"hybrid root finding did not converge (eta={eta}, zeta={zeta})")
    return p


# --- exponential weights -------------------------------------------------------


@njit(cache=True)
def _exp_weights(L, eta, p_out):
    m = L.min()
    total = 0.0
    for i in range(L.size):
        p_out[i] = math.exp(-eta * (L[i] - m))
        total += p_out[i]
    for i in range(L.size):
        p_out[i] /= total


def exp_weights(L, eta):
    """Softmax of ``-eta * L`` computed with max subtraction."""
    L = _check_losses(L)
    _check_rate("eta", eta)
    p = np.empty_like(L)
    _exp_weights(L, float(eta), p)
    return p


# --- certificates ----------------------------------------------------------------


def stationarity_residual(p, L, grad_reg):
    """Smallest sup-norm of ``L + grad F(p) + lam * 1`` over scalar ``lam``.

    Zero exactly when ``p`` is a KKT point of an interior optimum.
    """
    r = np.asarray(L, dtype=np.float64) + grad_reg(np.asarray(p, dtype=np.float64))
    return 0.5 * float(r.max() - r.min())


def tsallis_gradient(eta):
    return lambda p: -1.0 / (eta * np.sqrt(p))


def hybrid_gradient(eta, zeta):
    return lambda p: -1.0 / (eta * np.sqrt(p)) + (np.log(p) + 1.0) / zeta


def negentropy_gradient(eta):
    return lambda p: (np.log(p) + 1.0) / eta

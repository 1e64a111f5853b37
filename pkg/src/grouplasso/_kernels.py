"""Compiled inner loops for block coordinate descent.

Per-group Gram blocks ``X_k' X_k`` and their eigendecompositions are stored
padded to the largest group size: ``grams[k, :d_k, :d_k]``, ``evals[k, :d_k]``
and ``evecs[k, :d_k, :d_k]``.
"""

import numpy as np
from numba import njit

_EIG_RTOL = 1e-12
# ||z|| within this relative margin of tau counts as a tie: the exact solution
# has norm O(margin) and its direction is lost to rounding, so return zero
_TIE_RTOL = 1e-12


@njit(cache=True)
def solve_block(z, evals, evecs, d, tau, out):
    """Minimize ``0.5 * ||r - X_k b||^2 + tau * ||b||`` given ``z = X_k' r``.

    With ``X_k' X_k = V diag(e) V'`` and ``u = V' z`` the nonzero solution is
    ``b = V (u * t / (e t + tau))`` where ``t = ||b||`` is the root of
    ``sum u_i^2 / (e_i t + tau)^2 = 1``. That function is convex and decreasing
    in ``t``, so Newton started left of the root climbs to it monotonically.
    Writes ``b`` into ``out[:d]``.
    """
    znorm = 0.0
    for i in range(d):
        znorm += z[i] * z[i]
    znorm = np.sqrt(znorm)
    if znorm <= tau * (1.0 + _TIE_RTOL):
        for i in range(d):
            out[i] = 0.0
        return
    emax = 0.0
    for i in range(d):
        if evals[i] > emax:
            emax = evals[i]
    cut = _EIG_RTOL * emax
    u = np.zeros(d)
    for j in range(d):
        s = 0.0
        for i in range(d):
            s += evecs[i, j] * z[i]
        u[j] = s
    coef = np.zeros(d)
    if tau == 0.0:
        for j in range(d):
            coef[j] = u[j] / evals[j] if evals[j] > cut else 0.0
    else:
        unorm = 0.0
        for j in range(d):
            unorm += u[j] * u[j]
        unorm = np.sqrt(unorm)
        t = max((unorm - tau) / emax, 0.0)
        for _ in range(200):
            f = -1.0
            fp = 0.0
            for j in range(d):
                den = evals[j] * t + tau
                f += u[j] * u[j] / (den * den)
                fp -= 2.0 * u[j] * u[j] * evals[j] / (den * den * den)
            if fp >= 0.0:
                break
            step = f / fp
            t -= step
            if abs(step) <= 1e-15 * t:
                break
        t = max(t, 0.0)
        for j in range(d):
            coef[j] = u[j] * t / (evals[j] * t + tau)
    for i in range(d):
        s = 0.0
        for j in range(d):
            s += evecs[i, j] * coef[j]
        out[i] = s


@njit(cache=True)
def sweep(X, r, beta, offsets, order, taus, grams, evals, evecs):
    """One cyclic pass of exact block updates over the groups in ``order``.

    ``r`` holds the current residual ``y - X beta`` and is updated in place
    together with ``beta``. Returns the largest change in any coefficient.
    """
    n = X.shape[0]
    dmax = evals.shape[1]
    z = np.zeros(dmax)
    bnew = np.zeros(dmax)
    delta_max = 0.0
    for k in order:
        a = offsets[k]
        d = offsets[k + 1] - a
        # z = X_k' (r + X_k b_k)  computed via X_k' r + (X_k' X_k) b_k
        for j in range(d):
            s = 0.0
            for i in range(n):
                s += X[i, a + j] * r[i]
            z[j] = s
        nonzero = False
        for j in range(d):
            if beta[a + j] != 0.0:
                nonzero = True
                break
        if nonzero:
            for j in range(d):
                s = 0.0
                for l in range(d):
                    s += grams[k, j, l] * beta[a + l]
                z[j] += s
        solve_block(z, evals[k], evecs[k], d, taus[k], bnew)
        for j in range(d):
            diff = bnew[j] - beta[a + j]
            if diff != 0.0:
                for i in range(n):
                    r[i] -= X[i, a + j] * diff
                beta[a + j] = bnew[j]
                if abs(diff) > delta_max:
                    delta_max = abs(diff)
    return delta_max


@njit(cache=True)
def kkt_violation(X, r, beta, offsets, order, taus):
    """Largest groupwise KKT violation over ``order``.

    Active block: ``||X_k' r - tau_k b_k / ||b_k|| ||``.
    Zero block: ``max(||X_k' r|| - tau_k, 0)``.
    """
    n = X.shape[0]
    worst = 0.0
    for k in order:
        a = offsets[k]
        d = offsets[k + 1] - a
        bn = 0.0
        for j in range(d):
            bn += beta[a + j] * beta[a + j]
        bn = np.sqrt(bn)
        acc = 0.0
        for j in range(d):
            s = 0.0
            for i in range(n):
                s += X[i, a + j] * r[i]
            if bn > 0.0:
                s -= taus[k] * beta[a + j] / bn
            acc += s * s
        acc = np.sqrt(acc)
        v = acc if bn > 0.0 else acc - taus[k]
        if v > worst:
            worst = v
    return worst

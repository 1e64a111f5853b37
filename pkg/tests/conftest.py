"""Shared fixtures and independent reference solvers.

The references deliberately share no code with the package: a proximal
gradient method for the group problem and scalar coordinate descent for the
plain lasso.
"""

from __future__ import annotations

import numpy as np
import pytest

from grouplasso.model import GroupedDesign


def random_instance(seed: int, n: int, sizes, noise: float = 1.0, sparsity: float = 0.5):
    """Correlated design, sparse group truth, Gaussian noise."""
    rng = np.random.default_rng(seed)
    N = int(sum(sizes))
    base = rng.standard_normal((n, N))
    X = base + 0.3 * rng.standard_normal((n, 1))
    beta = rng.standard_normal(N)
    start = 0
    for d in sizes:
        if rng.random() < sparsity:
            beta[start:start + d] = 0.0
        start += d
    y = X @ beta + noise * rng.standard_normal(n)
    return GroupedDesign(X, tuple(sizes)), y, beta


def _block_prox(v: np.ndarray, offsets, thresholds):
    out = np.zeros_like(v)
    for k, t in enumerate(thresholds):
        if np.isinf(t):
            continue
        s = slice(offsets[k], offsets[k + 1])
        nv = np.linalg.norm(v[s])
        if nv > t:
            out[s] = (1 - t / nv) * v[s]
    return out


def prox_grad_reference(X, y, sizes, lam, weights=None, iters=200_000, tol=1e-15):
    """FISTA with gradient restart on ``0.5||y - Xb||^2 + lam sum w_k sqrt(d_k) ||b_k||``.

    Step size ``1/L`` with ``L = ||X||_2^2``.
    """
    sizes = np.asarray(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    w = np.ones(len(sizes)) if weights is None else np.asarray(weights, float)
    L = np.linalg.norm(X, 2) ** 2
    thresholds = lam * w * np.sqrt(sizes) / L
    b = np.zeros(X.shape[1])
    z = b.copy()
    t = 1.0
    for _ in range(iters):
        grad = X.T @ (X @ z - y)
        b_new = _block_prox(z - grad / L, offsets, thresholds)
        if np.dot(z - b_new, b_new - b) > 0:  # restart when momentum points uphill
            t = 1.0
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        z = b_new + (t - 1) / t_new * (b_new - b)
        step = np.linalg.norm(b_new - b)
        b, t = b_new, t_new
        if step <= tol * max(1.0, np.linalg.norm(b)):
            break
    return b


def group_objective(X, y, sizes, lam, b, weights=None):
    sizes = np.asarray(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    w = np.ones(len(sizes)) if weights is None else np.asarray(weights, float)
    r = y - X @ b
    pen = sum(
        lam * w[k] * np.sqrt(sizes[k]) * np.linalg.norm(b[offsets[k]:offsets[k + 1]])
        for k in range(len(sizes))
        if np.isfinite(w[k])
    )
    return 0.5 * r @ r + pen


def lasso_cd_reference(X, y, lam, sweeps=100_000, tol=1e-15):
    """Cyclic coordinate descent for ``0.5||y - Xb||^2 + lam ||b||_1``."""
    n, m = X.shape
    b = np.zeros(m)
    r = y.astype(float).copy()
    col_sq = (X**2).sum(axis=0)
    for _ in range(sweeps):
        biggest = 0.0
        for j in range(m):
            old = b[j]
            rho = X[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j]
            if new != old:
                r -= X[:, j] * (new - old)
                b[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest <= tol:
            break
    return b


@pytest.fixture
def tiny_paths():
    from importlib import resources

    root = resources.files("grouplasso") / "data"
    return {
        "data": str(root / "tiny.csv"),
        "groups": str(root / "tiny_groups.json"),
        "beta": str(root / "tiny_beta.json"),
    }


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

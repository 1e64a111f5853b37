"""Group lasso by cyclic block coordinate descent.

Minimizes::

    0.5 * ||y - X beta||^2 + lam * sum_k w_k * sqrt(d_k) * ||beta_k||

Each block update is an exact minimization over one group with the other
groups fixed (see :func:`grouplasso._kernels.solve_block`). Optimality is
certified by the groupwise KKT conditions, which do not depend on the solver.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .model import GroupedCoefficients, GroupedDesign, zero_tolerance

__all__ = [
    "PenaltyConfig",
    "SolverOptions",
    "FitResult",
    "objective",
    "block_update",
    "kkt_residual",
    "lambda_max",
    "lambda_grid",
    "fit",
    "fit_path",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty level plus per-group multipliers.

    A weight of ``inf`` pins the group at zero.
    """

    lam: float
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"penalty level must be nonnegative, got {self.lam}")
        if self.weights is not None:
            w = tuple(float(v) for v in self.weights)
            if any(not v > 0 for v in w):
                raise ValueError("weights must be positive or +inf")
            object.__setattr__(self, "weights", w)

    def weight_array(self, p: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(p)
        if len(self.weights) != p:
            raise ValueError(f"expected {p} weights, got {len(self.weights)}")
        return np.array(self.weights)

    def levels(self, design: GroupedDesign) -> np.ndarray:
        """Per-group thresholds ``lam * w_k * sqrt(d_k)`` (``inf`` when pinned)."""
        w = self.weight_array(design.p)
        with np.errstate(invalid="ignore"):
            t = self.lam * w * np.sqrt(design.groups.sizes)
        # lam == 0 with an infinite weight still pins the group
        return np.where(np.isinf(w), np.inf, t)


@dataclass(frozen=True)
class SolverOptions:
    kkt_tol: float = 1e-6
    max_iters: int = 10000
    objective_tol: float = 1e-10

    def __post_init__(self):
        if not (self.kkt_tol > 0 and self.max_iters > 0 and self.objective_tol > 0):
            raise ValueError("solver options must be positive")


@dataclass
class FitResult:
    beta: GroupedCoefficients
    objective: float
    kkt_residual: float
    active_set: frozenset[int]
    iterations: int
    converged: bool
    lam: float
    weights: tuple[float, ...] | None = None
    rss: float = float("nan")
    trace: list[float] = field(default_factory=list, repr=False)
    stop_reason: str = ""

    @property
    def n_active(self) -> int:
        return len(self.active_set)

    def df(self) -> int:
        """Number of coefficients in active groups."""
        sizes = self.beta.groups.sizes
        return int(sum(sizes[k] for k in self.active_set))


class _GroupCache:
    """Per-design precomputation: Fortran-ordered X and block eigensystems."""

    def __init__(self, design: GroupedDesign):
        g = design.groups
        X = np.asfortranarray(design.matrix, dtype=float)
        dmax = g.d_max
        grams = np.zeros((g.p, dmax, dmax))
        evals = np.zeros((g.p, dmax))
        evecs = np.zeros((g.p, dmax, dmax))
        for k in range(g.p):
            Xk = X[:, g.slice(k)]
            G = Xk.T @ Xk
            d = G.shape[0]
            e, V = np.linalg.eigh(G)
            grams[k, :d, :d] = G
            evals[k, :d] = np.clip(e, 0.0, None)
            evecs[k, :d, :d] = V
        self.X = X
        self.offsets = np.asarray(g.offsets, dtype=np.int64)
        self.grams, self.evals, self.evecs = grams, evals, evecs


_CACHE_ATTR = "_grouplasso_cache"


def _cache(design: GroupedDesign) -> _GroupCache:
    c = getattr(design, _CACHE_ATTR, None)
    if c is None:
        c = _GroupCache(design)
        setattr(design, _CACHE_ATTR, c)
    return c


def _check_y(design: GroupedDesign, y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    if y.size != design.n:
        raise ValueError(f"response has length {y.size}, design has n={design.n}")
    return y


def _penalty_value(beta: GroupedCoefficients, levels: np.ndarray) -> float:
    norms = beta.norms()
    finite = np.isfinite(levels)
    return float(np.sum(levels[finite] * norms[finite]))


def objective(design: GroupedDesign, y, beta: GroupedCoefficients, penalty: PenaltyConfig) -> float:
    """``0.5 * ||y - X beta||^2 + sum_k lam_k sqrt(d_k) ||beta_k||``."""
    y = _check_y(design, y)
    r = y - design.matrix @ beta.values
    return 0.5 * float(r @ r) + _penalty_value(beta, penalty.levels(design))


def block_update(design: GroupedDesign, k: int, partial_residual, penalty: PenaltyConfig) -> np.ndarray:
    """Exact minimizer over block ``k`` given ``y - sum_{j != k} X_j beta_j``.

    Returns zeros when ``||X_k' r|| <= lam_k sqrt(d_k)``.
    """
    c = _cache(design)
    d = design.groups.sizes[k]
    tau = penalty.levels(design)[k]
    if np.isinf(tau):
        return np.zeros(d)
    r = np.asarray(partial_residual, dtype=float)
    z = design.block(k).T @ r
    out = np.zeros(d)
    _kernels.solve_block(z, c.evals[k, :d], c.evecs[k, :d, :d], d, float(tau), out)
    return out


def kkt_residual(design: GroupedDesign, y, beta: GroupedCoefficients, penalty: PenaltyConfig) -> float:
    """Worst groupwise violation of the KKT conditions (zero iff optimal).

    Active groups contribute ``||X_k'(y - X beta) - lam_k sqrt(d_k) beta_k/||beta_k|| ||``,
    zero groups contribute ``(||X_k'(y - X beta)|| - lam_k sqrt(d_k))_+``.
    Pinned groups (infinite weight) are exempt.
    """
    y = _check_y(design, y)
    levels = penalty.levels(design)
    corr = design.matrix.T @ (y - design.matrix @ beta.values)
    worst = 0.0
    for k in range(design.p):
        if np.isinf(levels[k]):
            continue
        sl = design.groups.slice(k)
        g, b = corr[sl], beta.values[sl]
        bn = np.linalg.norm(b)
        if bn > 0:
            v = np.linalg.norm(g - levels[k] * b / bn)
        else:
            v = max(np.linalg.norm(g) - levels[k], 0.0)
        worst = max(worst, v)
    return float(worst)


def lambda_max(design: GroupedDesign, y, weights: Sequence[float] | None = None) -> float:
    """Smallest ``lam`` at which the all-zero vector is optimal.

    Groups with infinite weight are ignored.
    """
    y = _check_y(design, y)
    w = PenaltyConfig(0.0, None if weights is None else tuple(weights)).weight_array(design.p)
    corr = design.matrix.T @ y
    norms = np.sqrt(np.add.reduceat(corr**2, design.groups.offsets[:-1]))
    scale = w * np.sqrt(design.groups.sizes)
    ok = np.isfinite(scale)
    if not ok.any():
        return 0.0
    return float(np.max(norms[ok] / scale[ok]))


def lambda_grid(lam_max: float, num: int = 100, ratio: float = 1e-3) -> np.ndarray:
    """Geometric grid from ``lam_max`` down to ``ratio * lam_max``."""
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, ratio * lam_max, num)


def fit(
    design: GroupedDesign,
    y,
    penalty: PenaltyConfig,
    opts: SolverOptions | None = None,
    warm_start: GroupedCoefficients | None = None,
) -> FitResult:
    """Solve the (weighted) group lasso at a single penalty level.

    Alternates full sweeps over every free group with inner sweeps restricted
    to the current active groups. Stops once the KKT residual is within
    ``opts.kkt_tol``, or once a full sweep lowers the objective by less than
    ``opts.objective_tol`` (relative) without improving the KKT residual.
    Never raises on non-convergence; the
    result then carries ``converged=False`` and the last iterate.
    """
    opts = opts or SolverOptions()
    y = _check_y(design, y)
    c = _cache(design)
    levels = penalty.levels(design)
    free = np.flatnonzero(np.isfinite(levels)).astype(np.int64)
    taus = np.where(np.isfinite(levels), levels, 0.0)

    beta = np.zeros(design.groups.n_coef)
    if warm_start is not None:
        if warm_start.groups.sizes != design.groups.sizes:
            raise ValueError("warm start does not match the design's groups")
        beta[:] = warm_start.values
    for k in np.flatnonzero(~np.isfinite(levels)):
        beta[design.groups.slice(k)] = 0.0

    X = c.X
    r = y - X @ beta
    off = c.offsets

    def obj():
        nb = np.sqrt(np.add.reduceat(beta**2, off[:-1]))
        return 0.5 * float(r @ r) + float(taus @ nb)

    trace = [obj()]
    iters = 0
    kkt = np.inf
    stop = "max_iters"
    while iters < opts.max_iters:
        _kernels.sweep(X, r, beta, off, free, taus, c.grams, c.evals, c.evecs)
        iters += 1
        r = y - X @ beta
        trace.append(obj())
        prev_kkt, kkt = kkt, _kernels.kkt_violation(X, r, beta, off, free, taus)
        if kkt <= opts.kkt_tol:
            stop = "kkt"
            break
        prev = trace[-2]
        # objective differences bottom out at rounding level long before the
        # KKT residual does, so only stop when KKT has stalled as well
        if prev - trace[-1] <= opts.objective_tol * max(abs(prev), 1e-300) and kkt >= prev_kkt:
            stop = "objective"
            break
        # converge on the active groups before touching the rest again
        active = free[np.sqrt(np.add.reduceat(beta**2, off[:-1]))[free] > 0]
        scale = max(float(np.abs(beta).max()), 1e-300)
        while iters < opts.max_iters and active.size:
            delta = _kernels.sweep(X, r, beta, off, active, taus, c.grams, c.evals, c.evecs)
            iters += 1
            trace.append(obj())
            if _kernels.kkt_violation(X, r, beta, off, active, taus) <= 0.5 * opts.kkt_tol:
                break
            if delta <= 1e-15 * scale:
                break
            active = free[np.sqrt(np.add.reduceat(beta**2, off[:-1]))[free] > 0]

    coef = GroupedCoefficients(beta, design.groups)
    resid = y - design.matrix @ beta
    final_kkt = kkt_residual(design, y, coef, penalty)
    converged = final_kkt <= opts.kkt_tol
    if not converged:
        log.debug("fit at lam=%g stopped (%s) with KKT residual %.3g", penalty.lam, stop, final_kkt)
    return FitResult(
        beta=coef,
        objective=0.5 * float(resid @ resid) + _penalty_value(coef, levels),
        kkt_residual=final_kkt,
        active_set=coef.active_set(zero_tolerance(y)),
        iterations=iters,
        converged=converged,
        lam=float(penalty.lam),
        weights=penalty.weights,
        rss=float(resid @ resid),
        trace=trace,
        stop_reason=stop,
    )


def fit_path(
    design: GroupedDesign,
    y,
    lambdas: Sequence[float],
    weights: Sequence[float] | None = None,
    opts: SolverOptions | None = None,
    max_df: int | None = None,
) -> list[FitResult]:
    """Warm-started fits along a strictly descending grid.

    If ``max_df`` is given the path stops early once an active model uses that
    many coefficients or more; the returned list is then shorter than the grid.
    Fits that fail to converge are kept and flagged by ``converged=False``.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError("lambda grid must be a nonempty 1-d sequence")
    if np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambda grid must be strictly descending")
    w = None if weights is None else tuple(weights)
    path = []
    warm = None
    for lam in lambdas:
        res = fit(design, y, PenaltyConfig(float(lam), w), opts, warm)
        path.append(res)
        warm = res.beta
        if max_df is not None and res.df() >= max_df:
            break
    return path

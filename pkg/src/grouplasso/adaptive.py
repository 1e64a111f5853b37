"""Two-stage adaptive group lasso.

Stage one is a BIC-tuned group lasso. Its group norms give weights
``w_k = 1 / ||beta_k||``; groups it sets to zero get an infinite weight and
are dropped. Stage two solves the weighted problem by rescaling each
surviving block by its initial norm and running the plain solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import GroupedCoefficients, GroupedDesign, zero_tolerance
from .selection import BicRecord, select_by_bic
from .solver import (
    FitResult,
    PenaltyConfig,
    SolverOptions,
    fit,
    fit_path,
    kkt_residual,
    lambda_grid,
    lambda_max,
)

__all__ = [
    "AdaptiveConfig",
    "TwoStageResult",
    "adaptive_weights",
    "adaptive_fit",
    "adaptive_path",
    "two_stage",
]


@dataclass(frozen=True)
class AdaptiveConfig:
    lambda_tilde: float

    def __post_init__(self):
        if not self.lambda_tilde >= 0:
            raise ValueError("lambda_tilde must be nonnegative")


@dataclass
class TwoStageResult:
    initial: FitResult
    final: FitResult
    dropped_groups: frozenset[int]
    weights: np.ndarray
    degenerate: bool = False
    stage1_bic: list[BicRecord] | None = None
    stage2_bic: list[BicRecord] | None = None
    stage1_index: int = 0
    stage2_index: int = 0


def adaptive_weights(initial: GroupedCoefficients, tol: float | None = None) -> np.ndarray:
    """``1 / ||beta_k||`` for nonzero initial groups, ``inf`` for zero ones."""
    tol = zero_tolerance() if tol is None else tol
    norms = initial.norms()
    w = np.full(norms.shape, np.inf)
    nz = norms > tol
    w[nz] = 1.0 / norms[nz]
    return w


class _Rescaled:
    """Surviving groups of a design with block ``k`` multiplied by ``s_k``."""

    def __init__(self, design: GroupedDesign, scales: np.ndarray):
        self.design = design
        self.keep = np.flatnonzero(np.isfinite(scales) & (scales > 0))
        self.scales = scales[self.keep]
        cols = [design.block(k) * s for k, s in zip(self.keep, self.scales)]
        sizes = tuple(design.groups.sizes[k] for k in self.keep)
        self.reduced = GroupedDesign(np.hstack(cols), sizes) if sizes else None

    def expand(self, beta_reduced: GroupedCoefficients) -> GroupedCoefficients:
        full = np.zeros(self.design.groups.n_coef)
        for j, (k, s) in enumerate(zip(self.keep, self.scales)):
            full[self.design.groups.slice(k)] = beta_reduced.block(j) * s
        return GroupedCoefficients(full, self.design.groups)

    def to_full(self, res: FitResult, y, weights: np.ndarray) -> FitResult:
        beta = self.expand(res.beta)
        pen = PenaltyConfig(res.lam, tuple(weights))
        r = np.asarray(y, float) - self.design.matrix @ beta.values
        levels = pen.levels(self.design)
        norms = beta.norms()
        fin = np.isfinite(levels)
        return FitResult(
            beta=beta,
            objective=0.5 * float(r @ r) + float(levels[fin] @ norms[fin]),
            kkt_residual=kkt_residual(self.design, y, beta, pen),
            active_set=frozenset(int(self.keep[j]) for j in res.active_set),
            iterations=res.iterations,
            converged=res.converged,
            lam=res.lam,
            weights=tuple(weights),
            rss=float(r @ r),
            trace=res.trace,
            stop_reason=res.stop_reason,
        )


def _zero_fit(design: GroupedDesign, y, lam: float, weights) -> FitResult:
    y = np.asarray(y, float)
    beta = GroupedCoefficients.zeros(design.groups)
    return FitResult(
        beta=beta,
        objective=0.5 * float(y @ y),
        kkt_residual=0.0,
        active_set=frozenset(),
        iterations=0,
        converged=True,
        lam=float(lam),
        weights=tuple(weights),
        rss=float(y @ y),
        stop_reason="degenerate",
    )


def adaptive_fit(
    design: GroupedDesign,
    y,
    initial: GroupedCoefficients,
    config: AdaptiveConfig,
    opts: SolverOptions | None = None,
) -> FitResult:
    """Weighted group lasso with weights from ``initial``, solved by rescaling.

    Surviving block ``X_k`` is multiplied by ``||initial_k||``, the plain
    problem is solved at ``lambda_tilde`` and the solution is scaled back.
    Returns the zero fit when the initial estimate has no active group.
    """
    tol = zero_tolerance(y)
    w = adaptive_weights(initial, tol)
    scaled = _Rescaled(design, np.where(np.isfinite(w), 1.0 / w, 0.0))
    if scaled.reduced is None:
        return _zero_fit(design, y, config.lambda_tilde, w)
    res = fit(scaled.reduced, y, PenaltyConfig(config.lambda_tilde), opts)
    return scaled.to_full(res, y, w)


def adaptive_path(
    design: GroupedDesign,
    y,
    initial: GroupedCoefficients,
    lambdas: Sequence[float] | None = None,
    opts: SolverOptions | None = None,
    num: int = 50,
    ratio: float = 1e-3,
    max_df: int | None = None,
) -> tuple[list[FitResult], np.ndarray]:
    """Adaptive fits over a descending grid; returns ``(path, weights)``.

    The default grid has ``num`` geometric points from the rescaled problem's
    ``lambda_max`` down by ``ratio``.
    """
    tol = zero_tolerance(y)
    w = adaptive_weights(initial, tol)
    scaled = _Rescaled(design, np.where(np.isfinite(w), 1.0 / w, 0.0))
    if scaled.reduced is None:
        lam = 0.0 if lambdas is None else float(lambdas[0])
        return [_zero_fit(design, y, lam, w)], w
    if lambdas is None:
        lambdas = lambda_grid(lambda_max(scaled.reduced, y), num, ratio)
    path = fit_path(scaled.reduced, y, lambdas, opts=opts, max_df=max_df)
    return [scaled.to_full(res, y, w) for res in path], w


def two_stage(
    design: GroupedDesign,
    y,
    stage1_lambdas: Sequence[float] | None = None,
    stage2_lambdas: Sequence[float] | None = None,
    opts: SolverOptions | None = None,
    df_rule: str = "coefficient_count",
    stage1_num: int = 100,
    stage2_num: int = 50,
    ratio: float = 1e-3,
    max_df: int | None = None,
) -> TwoStageResult:
    """Group lasso then adaptive group lasso, each tuned by BIC.

    Grids default to geometric grids anchored at the respective ``lambda_max``.
    ``max_df`` truncates each path once a fit uses that many coefficients.
    """
    if stage1_lambdas is None:
        stage1_lambdas = lambda_grid(lambda_max(design, y), stage1_num, ratio)
    path1 = fit_path(design, y, stage1_lambdas, opts=opts, max_df=max_df)
    i1, bic1 = select_by_bic(path1, design, y, df_rule)
    initial = path1[i1]

    path2, w = adaptive_path(
        design, y, initial.beta, stage2_lambdas, opts, stage2_num, ratio, max_df
    )
    dropped = frozenset(int(k) for k in np.flatnonzero(np.isinf(w)))
    degenerate = len(dropped) == design.p
    if degenerate:
        return TwoStageResult(initial, path2[0], dropped, w, True, bic1, None, i1, 0)
    i2, bic2 = select_by_bic(path2, design, y, df_rule)
    return TwoStageResult(initial, path2[i2], dropped, w, False, bic1, bic2, i1, i2)

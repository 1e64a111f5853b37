"""Penalty selection by BIC along a lambda path."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .model import GroupedDesign
from .solver import FitResult

__all__ = ["BicRecord", "DF_RULES", "bic_score", "degrees_of_freedom", "select_by_bic", "write_bic_csv"]

DF_RULES = ("coefficient_count", "yuan_lin")


@dataclass(frozen=True)
class BicRecord:
    lam: float
    rss: float
    df: float
    bic: float
    active_groups: int


def bic_score(n: int, rss: float, df: float) -> float:
    """``n log(rss / n) + log(n) df``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not rss > 0:
        raise ValueError(f"BIC undefined for rss={rss} (perfect fit)")
    return float(n * np.log(rss / n) + np.log(n) * df)


def _ols_group_norms(design: GroupedDesign, y) -> np.ndarray:
    if design.n <= design.groups.n_coef:
        raise ValueError(
            f"the yuan_lin df rule needs n > N_d (n={design.n}, N_d={design.groups.n_coef})"
        )
    b, *_ = np.linalg.lstsq(design.matrix, np.asarray(y, float), rcond=None)
    return np.sqrt(np.add.reduceat(b**2, design.groups.offsets[:-1]))


def degrees_of_freedom(result: FitResult, rule: str = "coefficient_count", ols_norms=None) -> float:
    """Effective degrees of freedom of a fitted model.

    ``coefficient_count`` counts coefficients in active groups. ``yuan_lin``
    uses ``sum_k 1{active} + sum_k (||b_k|| / ||b_k^OLS||) (d_k - 1)`` and
    needs the groupwise norms of the full least-squares fit.
    """
    sizes = result.beta.groups.sizes
    if rule == "coefficient_count":
        return float(result.df())
    if rule == "yuan_lin":
        if ols_norms is None:
            raise ValueError("yuan_lin df requires OLS group norms")
        norms = result.beta.norms()
        df = 0.0
        for k in result.active_set:
            df += 1.0 + norms[k] / ols_norms[k] * (sizes[k] - 1)
        return df
    raise ValueError(f"unknown df rule {rule!r}; choose from {DF_RULES}")


def select_by_bic(
    path: Sequence[FitResult],
    design: GroupedDesign,
    y,
    df_rule: str = "coefficient_count",
) -> tuple[int, list[BicRecord]]:
    """Index of the BIC-minimizing fit and the per-point BIC table.

    Ties go to the earlier (larger-lambda, sparser) point.
    """
    if not path:
        raise ValueError("empty path")
    ols = _ols_group_norms(design, y) if df_rule == "yuan_lin" else None
    records = []
    for res in path:
        df = degrees_of_freedom(res, df_rule, ols)
        records.append(
            BicRecord(res.lam, res.rss, df, bic_score(design.n, res.rss, df), res.n_active)
        )
    best = int(np.argmin([r.bic for r in records]))
    return best, records


def write_bic_csv(records: Sequence[BicRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda", "rss", "df", "bic", "active_groups"])
        for r in records:
            d = asdict(r)
            w.writerow([repr(d["lam"]), repr(d["rss"]), repr(d["df"]), repr(d["bic"]), d["active_groups"]])

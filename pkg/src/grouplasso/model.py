"""Grouped data model: group bookkeeping, designs, coefficient blocks.

Everything here is immutable after construction. Arrays handed to the
constructors are copied and marked read-only so that designs can be shared
between threads or worker processes without surprises.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "GroupMapMismatch",
    "GroupStructure",
    "GroupedDesign",
    "GroupedCoefficients",
    "GroupMetric",
    "Standardization",
    "group_norms",
    "extract_submatrix",
    "reparameterize",
    "map_back",
    "orthonormalize_groups",
    "standardize",
    "zero_tolerance",
    "read_group_map",
    "read_grouped_csv",
]

ZERO_RTOL = 1e-8


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def zero_tolerance(y: np.ndarray | None = None) -> float:
    """Threshold below which a block norm counts as zero.

    The threshold is ``1e-8 * max(1, ||y|| / sqrt(n))`` so that it follows the
    scale of the response.
    """
    if y is None:
        return ZERO_RTOL
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        return ZERO_RTOL
    return ZERO_RTOL * max(1.0, float(np.linalg.norm(y)) / np.sqrt(y.size))


@dataclass(frozen=True)
class GroupStructure:
    """Partition of ``N_d`` coordinates into ``p`` consecutive groups."""

    sizes: tuple[int, ...]
    names: tuple[str, ...] | None = None
    offsets: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 1:
            raise ValueError("a group structure needs at least one group")
        if any(s < 1 for s in sizes):
            raise ValueError(f"group sizes must be positive, got {sizes}")
        object.__setattr__(self, "sizes", sizes)
        if self.names is not None:
            names = tuple(str(s) for s in self.names)
            if len(names) != len(sizes):
                raise ValueError("one name per group is required")
            object.__setattr__(self, "names", names)
        object.__setattr__(
            self, "offsets", _frozen(np.concatenate([[0], np.cumsum(sizes)]), int)
        )

    @classmethod
    def uniform(cls, p: int, size: int) -> "GroupStructure":
        return cls((size,) * p)

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def n_coef(self) -> int:
        """Total number of coordinates ``N_d``."""
        return int(self.offsets[-1])

    @property
    def d_max(self) -> int:
        return max(self.sizes)

    @property
    def d_min(self) -> int:
        return min(self.sizes)

    @property
    def d_ratio(self) -> float:
        return self.d_max / self.d_min

    def slice(self, k: int) -> slice:
        self._check_index(k)
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def columns(self, groups: Iterable[int]) -> np.ndarray:
        """Flat coordinate indices of ``groups`` in ascending group order."""
        idx = sorted(set(int(g) for g in groups))
        for k in idx:
            self._check_index(k)
        if not idx:
            return np.zeros(0, dtype=int)
        return np.concatenate(
            [np.arange(self.offsets[k], self.offsets[k + 1]) for k in idx]
        )

    def labels(self) -> np.ndarray:
        """Group label of every coordinate."""
        return np.repeat(np.arange(self.p), self.sizes)

    def _check_index(self, k: int):
        if not 0 <= k < self.p:
            raise IndexError(f"group index {k} out of range for p={self.p}")


class GroupedDesign:
    """An ``n x N_d`` covariate matrix partitioned into groups."""

    def __init__(self, matrix, groups: GroupStructure | Sequence[int]):
        if not isinstance(groups, GroupStructure):
            groups = GroupStructure(tuple(groups))
        X = _frozen(matrix)
        if X.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        if X.shape[0] < 1:
            raise ValueError("design needs at least one row")
        if X.shape[1] != groups.n_coef:
            raise ValueError(
                f"design has {X.shape[1]} columns but groups cover {groups.n_coef}"
            )
        self.matrix = X
        self.groups = groups

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.groups.p

    def block(self, k: int) -> np.ndarray:
        return self.matrix[:, self.groups.slice(k)]

    def gram(self, groups: Iterable[int] | None = None) -> np.ndarray:
        """Normalized Gram matrix ``X_A' X_A / n``."""
        XA = self.matrix if groups is None else extract_submatrix(self, groups)
        return XA.T @ XA / self.n

    def __repr__(self):
        return f"GroupedDesign(n={self.n}, p={self.p}, N_d={self.groups.n_coef})"


class GroupedCoefficients:
    """A coefficient vector partitioned like a design."""

    def __init__(self, values, groups: GroupStructure | Sequence[int]):
        if not isinstance(groups, GroupStructure):
            groups = GroupStructure(tuple(groups))
        v = _frozen(values).ravel()
        if v.size != groups.n_coef:
            raise ValueError(f"expected {groups.n_coef} coefficients, got {v.size}")
        self.values = v
        self.groups = groups

    @classmethod
    def from_blocks(cls, blocks: Sequence[Sequence[float]]) -> "GroupedCoefficients":
        sizes = tuple(len(b) for b in blocks)
        return cls(np.concatenate([np.asarray(b, float) for b in blocks]), sizes)

    @classmethod
    def zeros(cls, groups: GroupStructure) -> "GroupedCoefficients":
        return cls(np.zeros(groups.n_coef), groups)

    def block(self, k: int) -> np.ndarray:
        return self.values[self.groups.slice(k)]

    def norms(self) -> np.ndarray:
        return group_norms(self)

    def active_set(self, tol: float = ZERO_RTOL) -> frozenset[int]:
        return frozenset(int(k) for k in np.flatnonzero(self.norms() > tol))

    def __repr__(self):
        return f"GroupedCoefficients(p={self.groups.p}, active={sorted(self.active_set())})"


class GroupMetric:
    """Per-group symmetric positive-definite matrices ``R_k``."""

    def __init__(self, matrices: Sequence[np.ndarray]):
        mats = []
        for k, R in enumerate(matrices):
            R = np.atleast_2d(np.asarray(R, dtype=float))
            if R.shape[0] != R.shape[1]:
                raise ValueError(f"R_{k} must be square, got shape {R.shape}")
            if not np.allclose(R, R.T, rtol=1e-12, atol=1e-12 * np.abs(R).max()):
                raise ValueError(f"R_{k} is not symmetric")
            if np.linalg.eigvalsh(R).min() <= 0:
                raise ValueError(f"R_{k} is not positive definite")
            mats.append(_frozen(R))
        self.matrices = tuple(mats)

    @classmethod
    def identity(cls, groups: GroupStructure) -> "GroupMetric":
        """The metric ``R_k = d_k I`` that gives back the plain penalty."""
        return cls([d * np.eye(d) for d in groups.sizes])

    def penalty(self, beta: GroupedCoefficients) -> np.ndarray:
        """Per-group values ``sqrt(beta_k' R_k beta_k)``."""
        return np.array(
            [np.sqrt(beta.block(k) @ R @ beta.block(k)) for k, R in enumerate(self.matrices)]
        )


def group_norms(beta: GroupedCoefficients) -> np.ndarray:
    """Euclidean norm of every coefficient block."""
    sq = np.add.reduceat(beta.values**2, beta.groups.offsets[:-1])
    return np.sqrt(sq)


def extract_submatrix(design: GroupedDesign, groups: Iterable[int]) -> np.ndarray:
    """Columns of ``groups`` in ascending group order (``n x 0`` when empty)."""
    return design.matrix[:, design.groups.columns(groups)]


def reparameterize(design: GroupedDesign, metric: GroupMetric):
    """Absorb a general group metric into the design.

    Each ``R_k`` is factored as ``R_k = d_k Q_k' Q_k`` with ``Q_k`` the upper
    Cholesky factor of ``R_k / d_k``. Returns the transformed design with blocks
    ``X_k Q_k^{-1}`` and the list of factors ``Q_k``. A plain group lasso on the
    transformed design, mapped back with :func:`map_back`, solves the
    general-metric problem.
    """
    sizes = design.groups.sizes
    if len(metric.matrices) != len(sizes):
        raise ValueError(f"metric has {len(metric.matrices)} groups, design has {len(sizes)}")
    blocks, factors = [], []
    for k, (R, d) in enumerate(zip(metric.matrices, sizes)):
        if R.shape != (d, d):
            raise ValueError(f"R_{k} has shape {R.shape}, group {k} has size {d}")
        try:
            Q = linalg.cholesky(R / d, lower=False)
        except linalg.LinAlgError as exc:
            raise ValueError(f"R_{k} is not positive definite") from exc
        factors.append(Q)
        # X_k Q^{-1}: solve Q' Z' = X_k'
        blocks.append(linalg.solve_triangular(Q, design.block(k).T, trans="T").T)
    return GroupedDesign(np.hstack(blocks), design.groups), factors


def map_back(beta_star: GroupedCoefficients, factors: Sequence[np.ndarray]) -> GroupedCoefficients:
    """Map coefficients of the transformed problem back: ``beta_k = Q_k^{-1} beta*_k``."""
    out = [
        linalg.solve_triangular(Q, beta_star.block(k), lower=False)
        for k, Q in enumerate(factors)
    ]
    return GroupedCoefficients(np.concatenate(out), beta_star.groups)


def orthonormalize_groups(design: GroupedDesign):
    """Whiten every block so that ``X_k' X_k / n = I``.

    This is :func:`reparameterize` with the data-driven metric
    ``R_k = d_k X_k' X_k / n``: the penalty on block ``k`` becomes
    ``sqrt(d_k) ||X_k beta_k|| / sqrt(n)``. Returns the whitened design and the
    factors for :func:`map_back`. Fails if some block is rank deficient.
    """
    mats = []
    for k in range(design.p):
        Xk = design.block(k)
        mats.append(design.groups.sizes[k] * (Xk.T @ Xk) / design.n)
    try:
        metric = GroupMetric(mats)
    except ValueError as exc:
        raise ValueError(f"cannot orthonormalize: {exc} (rank-deficient block)") from exc
    return reparameterize(design, metric)


@dataclass(frozen=True)
class Standardization:
    """Record of the centering and scaling applied to a data set."""

    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float

    def to_original(self, beta: GroupedCoefficients) -> tuple[GroupedCoefficients, float]:
        """Coefficients and intercept on the original covariate scale."""
        b = beta.values / self.x_scale
        return GroupedCoefficients(b, beta.groups), float(self.y_mean - self.x_mean @ b)

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_mean": self.y_mean,
        }


def standardize(design: GroupedDesign, y, center: bool = True, scale: bool = True):
    """Center ``y``, center and unit-variance-scale every column.

    Constant columns keep scale 1. Returns ``(design, y, Standardization)``.
    """
    X = np.array(design.matrix)
    y = np.asarray(y, dtype=float)
    mu = X.mean(axis=0) if center else np.zeros(X.shape[1])
    X = X - mu
    sd = X.std(axis=0) if scale else np.ones(X.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    ybar = float(y.mean()) if center else 0.0
    record = Standardization(_frozen(mu), _frozen(sd), ybar)
    return GroupedDesign(X / sd, design.groups), y - ybar, record


def read_group_map(path) -> GroupStructure:
    """Read ``{"groups": [{"name": ..., "size": ...}, ...]}``."""
    with open(path, encoding="utf-8") as fh:
        spec = json.load(fh)
    try:
        entries = spec["groups"]
        names = [str(g["name"]) for g in entries]
        sizes = [int(g["size"]) for g in entries]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed group map {path}: {exc}") from exc
    return GroupStructure(tuple(sizes), tuple(names))


class GroupMapMismatch(ValueError):
    """Covariate columns and group sizes disagree."""

    def __init__(self, groups: GroupStructure, header: Sequence[str]):
        self.expected = groups.n_coef
        self.found = len(header)
        super().__init__(
            f"group map covers {self.expected} columns "
            f"(sizes {list(groups.sizes)}), CSV has {self.found} covariate columns"
        )


def read_grouped_csv(csv_path, groups_path, response: str | None = "y"):
    """Load a CSV with a header row plus its group map.

    The ``response`` column (if given and present) is split off as ``y``; every
    other column is a covariate, in file order. Returns ``(design, y, header)``
    where ``y`` is ``None`` if there is no response column.
    """
    groups = read_group_map(groups_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{csv_path} is empty")
    header = [h.strip() for h in rows[0]]
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if data.ndim != 2 or data.shape[1] != len(header):
        raise ValueError(f"{csv_path}: rows do not match the header width")
    y = None
    if response is not None and response in header:
        j = header.index(response)
        y = data[:, j]
        data = np.delete(data, j, axis=1)
        header = header[:j] + header[j + 1:]
    if data.shape[1] != groups.n_coef:
        raise GroupMapMismatch(groups, header)
    return GroupedDesign(data, groups), y, header

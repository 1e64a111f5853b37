"""Simulated grouped-regression benchmarks and the replication harness.

Covariates share one latent factor per group::

    X_{group j, coordinate i} = (Z_j + R_{ji}) / sqrt(2)

with ``cov(Z_a, Z_b) = rho^|a-b|`` and independent standard normal ``R``.
Every covariate therefore has unit variance, covariates in the same group have
covariance 1/2, and covariates in groups ``a != b`` have covariance
``rho^|a-b| / 2``.

Randomness uses Philox (a counter-based generator) keyed by
``(seed, replication, stream)`` so a replication's data never depends on how
many replications ran before it or in which order. Streams: 0 = latent
factors, 1 = idiosyncratic terms, 2 = noise.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .adaptive import two_stage
from .model import GroupedCoefficients, GroupedDesign, GroupStructure, map_back, orthonormalize_groups
from .selection import select_by_bic
from .solver import FitResult, SolverOptions, fit_path, lambda_grid, lambda_max

__all__ = [
    "ExampleSpec",
    "example_spec",
    "population_covariance",
    "generate",
    "model_error",
    "SimulationMetrics",
    "ReplicationReport",
    "replicate_once",
    "summarize",
    "run_replications",
    "PUBLISHED_TABLE",
]

log = logging.getLogger(__name__)

STREAM_FACTOR, STREAM_IDIO, STREAM_NOISE = 0, 1, 2

_B1 = [0.5, 1, 1.5, 2, 2.5]
_EX23 = [[0.5, 1, 1.5, 1, 0.5], [1, 1, 1, 1, 1], [-1, 0, 1, 2, 1.5], [-1.5, 1, 0.5, 0.5, 0.5]]
_EX56_BIG = [_B1, [2, 2, 2, 2, 2], [-1, 0, 1, 2, 3], [-1.5, 2, 0, 0, 0]]
_EX56_SMALL = [[2, -2, 1], [0, -3, 1.5], [-1.5, 1.5, 2], [-2, -2, -2]]

# Published benchmark values: (mean, median, ME, %incl, %sel) per method.
PUBLISHED_TABLE = {
    1: {"group_lasso": (2.04, 2, 8.79, 100.0, 96.5), "adaptive": (2.01, 2, 8.54, 100.0, 99.5)},
    2: {"group_lasso": (4.11, 4, 8.52, 99.5, 88.5), "adaptive": (4.00, 4, 8.10, 99.5, 98.0)},
    3: {"group_lasso": (4.00, 4, 9.48, 93.0, 86.5), "adaptive": (3.94, 4, 8.19, 93.0, 92.5)},
    4: {"group_lasso": (3.17, 3, 8.78, 100.0, 85.3), "adaptive": (3.00, 3, 8.36, 100.0, 100.0)},
    5: {"group_lasso": (8.88, 9, 7.68, 100.0, 40.0), "adaptive": (8.03, 8, 7.58, 100.0, 97.5)},
    6: {"group_lasso": (12.90, 9, 14.61, 66.5, 7.0), "adaptive": (11.49, 8, 9.28, 66.5, 47.0)},
}


@dataclass(frozen=True)
class ExampleSpec:
    """A simulation model: group sizes, true blocks, factor correlation, noise."""

    example_id: int
    sizes: tuple[int, ...]
    beta: tuple[float, ...]
    n: int = 200
    rho: float = 0.6
    sigma: float = 3.0

    def __post_init__(self):
        if sum(self.sizes) != len(self.beta):
            raise ValueError("beta length must equal the sum of group sizes")
        if self.n < 1 or self.sigma < 0 or not -1 < self.rho < 1:
            raise ValueError("invalid n, sigma or rho")

    @property
    def groups(self) -> GroupStructure:
        return GroupStructure(self.sizes)

    @property
    def p(self) -> int:
        return len(self.sizes)

    @property
    def beta_true(self) -> GroupedCoefficients:
        return GroupedCoefficients(np.array(self.beta), self.groups)

    @property
    def true_groups(self) -> frozenset[int]:
        return self.beta_true.active_set(0.0)

    def with_(self, **changes) -> "ExampleSpec":
        d = asdict(self)
        d.update(changes)
        return ExampleSpec(**d)


def _blocks(blocks, sizes) -> tuple[float, ...]:
    out = []
    for k, d in enumerate(sizes):
        out.extend(blocks[k] if k < len(blocks) else [0.0] * d)
    return tuple(float(v) for v in out)


def example_spec(example_id: int, n: int = 200, sigma: float = 3.0) -> ExampleSpec:
    """The six benchmark models (sizes and true coefficients)."""
    if example_id == 1:
        sizes = (5,) * 10
        beta = _blocks([_B1, [2] * 5], sizes)
    elif example_id == 2:
        sizes = (5,) * 10
        beta = _blocks(_EX23, sizes)
    elif example_id == 3:
        sizes = (5,) * 210
        beta = _blocks(_EX23, sizes)
    elif example_id == 4:
        sizes = (5,) * 5 + (3,) * 5
        beta = _blocks([_B1, [2, 0, 0, 2, 2], [0] * 5, [0] * 5, [0] * 5, [-1, -2, -3]], sizes)
    elif example_id == 5:
        sizes = (5,) * 5 + (3,) * 5
        beta = _blocks(_EX56_BIG + [[0] * 5] + _EX56_SMALL, sizes)
    elif example_id == 6:
        sizes = (5,) * 100 + (3,) * 110
        blocks = _EX56_BIG + [[0] * 5] * 96 + _EX56_SMALL
        beta = _blocks(blocks, sizes)
    else:
        raise ValueError(f"example id must be in 1..6, got {example_id}")
    return ExampleSpec(example_id, sizes, beta, n=n, sigma=sigma)


def population_covariance(spec: ExampleSpec) -> np.ndarray:
    """Exact covariance of one covariate row under ``spec``."""
    p = spec.p
    T = spec.rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    lab = spec.groups.labels()
    S = 0.5 * T[np.ix_(lab, lab)]
    S[np.diag_indices_from(S)] = 1.0
    return S


def _rng(seed: int, replication: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(replication, stream))
    return np.random.Generator(np.random.Philox(ss))


def generate(spec: ExampleSpec, seed: int, replication: int = 0):
    """Draw ``(design, y, beta_true)`` for one replication.

    Latent factors are drawn factor-by-factor and idiosyncratic terms
    column-by-column, so two specs that share leading groups (for instance
    Examples 2 and 3) share those columns exactly at the same seed.
    """
    n, p = spec.n, spec.p
    T = spec.rho ** np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    L = linalg.cholesky(T, lower=True)
    E = _rng(seed, replication, STREAM_FACTOR).standard_normal((p, n))
    Z = (L @ E).T
    R = _rng(seed, replication, STREAM_IDIO).standard_normal((spec.groups.n_coef, n)).T
    X = (Z[:, spec.groups.labels()] + R) / np.sqrt(2.0)
    beta = spec.beta_true
    eps = _rng(seed, replication, STREAM_NOISE).standard_normal(n)
    y = X @ beta.values + spec.sigma * eps
    return GroupedDesign(X, spec.groups), y, beta


def model_error(beta_hat: GroupedCoefficients, beta_true: GroupedCoefficients, cov: np.ndarray) -> float:
    """``(beta_hat - beta)' cov (beta_hat - beta)``."""
    diff = beta_hat.values - beta_true.values
    return float(diff @ cov @ diff)


@dataclass
class SimulationMetrics:
    """Table-style summary of one method over all replications.

    ``*_sd`` are across-replication standard deviations (the spread reported in
    parentheses in the benchmark table); ``*_se`` are standard errors of the
    corresponding mean or percentage. ``rss_per_n`` is the in-sample residual
    mean square, the other loss reported alongside ``model_error``.
    """

    mean_selected: float
    sd_selected: float
    se_selected: float
    median_selected: float
    q25: float
    q75: float
    model_error: float
    model_error_sd: float
    model_error_se: float
    rss_per_n: float
    rss_per_n_sd: float
    pct_incl: float
    pct_incl_sd: float
    pct_incl_se: float
    pct_sel: float
    pct_sel_sd: float
    pct_sel_se: float
    replications: int


@dataclass
class ReplicationReport:
    spec: ExampleSpec
    replications: int
    seed: int
    method: str
    group_lasso: SimulationMetrics | None
    adaptive: SimulationMetrics | None
    records: list[dict] = field(default_factory=list)
    failures: int = 0
    options: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "replications": self.replications,
            "seed": self.seed,
            "method": self.method,
            "group_lasso": None if self.group_lasso is None else asdict(self.group_lasso),
            "adaptive": None if self.adaptive is None else asdict(self.adaptive),
            "failures": self.failures,
            "options": self.options,
            "records": self.records,
        }


def _record(beta: GroupedCoefficients, res: FitResult, spec: ExampleSpec, cov: np.ndarray) -> dict:
    truth = spec.true_groups
    sel = res.active_set
    return {
        "selected": sorted(sel),
        "n_selected": len(sel),
        "incl": truth <= sel,
        "exact": truth == sel,
        "model_error": model_error(beta, spec.beta_true, cov),
        "rss_per_n": res.rss / spec.n,
        "lam": res.lam,
        "kkt_residual": res.kkt_residual,
        "converged": res.converged,
    }


PREPROCESSING = ("orthonormalize", "none")


def replicate_once(
    spec: ExampleSpec,
    seed: int,
    replication: int,
    method: str = "both",
    df_rule: str = "coefficient_count",
    opts: SolverOptions | None = None,
    stage1_num: int = 100,
    stage2_num: int = 50,
    ratio: float = 1e-3,
    max_df: int | None = -1,
    preprocess: str = "orthonormalize",
) -> dict:
    """Generate one data set, fit, and return the per-method records.

    ``preprocess="orthonormalize"`` fits on within-group whitened blocks and
    maps the coefficients back before computing model error. ``max_df=-1``
    means "truncate paths at n coefficients"; ``None`` disables truncation.
    """
    if preprocess not in PREPROCESSING:
        raise ValueError(f"preprocess must be one of {PREPROCESSING}")
    design, y, _ = generate(spec, seed, replication)
    cov = population_covariance(spec)
    max_df = spec.n if max_df == -1 else max_df
    factors = None
    if preprocess == "orthonormalize":
        design, factors = orthonormalize_groups(design)

    def original(b: GroupedCoefficients) -> GroupedCoefficients:
        return b if factors is None else map_back(b, factors)

    out = {"replication": replication}
    if method == "group_lasso":
        grid = lambda_grid(lambda_max(design, y), stage1_num, ratio)
        path = fit_path(design, y, grid, opts=opts, max_df=max_df)
        i, _ = select_by_bic(path, design, y, df_rule)
        out["group_lasso"] = _record(original(path[i].beta), path[i], spec, cov)
        return out
    res = two_stage(
        design, y, opts=opts, df_rule=df_rule,
        stage1_num=stage1_num, stage2_num=stage2_num, ratio=ratio, max_df=max_df,
    )
    out["group_lasso"] = _record(original(res.initial.beta), res.initial, spec, cov)
    out["adaptive"] = _record(original(res.final.beta), res.final, spec, cov)
    out["adaptive"]["degenerate"] = res.degenerate
    return out


def summarize(records: Sequence[dict]) -> SimulationMetrics:
    """Aggregate per-replication records of one method."""
    m = len(records)
    if m == 0:
        raise ValueError("no records to summarize")
    k = np.array([r["n_selected"] for r in records], dtype=float)
    me = np.array([r["model_error"] for r in records])
    rss = np.array([r["rss_per_n"] for r in records])
    incl = np.mean([r["incl"] for r in records])
    exact = np.mean([r["exact"] for r in records])
    sd = lambda a: float(np.std(a, ddof=1)) if m > 1 else 0.0
    q25, med, q75 = np.percentile(k, [25, 50, 75])
    return SimulationMetrics(
        mean_selected=float(k.mean()),
        sd_selected=sd(k),
        se_selected=sd(k) / float(np.sqrt(m)),
        median_selected=float(med),
        q25=float(q25),
        q75=float(q75),
        model_error=float(me.mean()),
        model_error_sd=sd(me),
        model_error_se=sd(me) / float(np.sqrt(m)),
        rss_per_n=float(rss.mean()),
        rss_per_n_sd=sd(rss),
        pct_incl=100.0 * float(incl),
        pct_incl_sd=100.0 * float(np.sqrt(incl * (1 - incl))),
        pct_incl_se=100.0 * float(np.sqrt(incl * (1 - incl) / m)),
        pct_sel=100.0 * float(exact),
        pct_sel_sd=100.0 * float(np.sqrt(exact * (1 - exact))),
        pct_sel_se=100.0 * float(np.sqrt(exact * (1 - exact) / m)),
        replications=m,
    )


def _worker(args):
    spec, seed, rep, kwargs = args
    try:
        return replicate_once(spec, seed, rep, **kwargs)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        return {"replication": rep, "error": f"{type(exc).__name__}: {exc}"}


def run_replications(
    spec: ExampleSpec,
    replications: int = 400,
    seed: int = 0,
    method: str = "both",
    n_jobs: int = 1,
    **kwargs,
) -> ReplicationReport:
    """Run ``replications`` independent data sets and summarize both methods.

    Extra keyword arguments go to :func:`replicate_once`. Replications that
    raise are excluded from the summary and counted in ``failures``.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    if method not in ("group_lasso", "adaptive", "both"):
        raise ValueError(f"unknown method {method!r}")
    inner = "group_lasso" if method == "group_lasso" else "both"
    tasks = [(spec, seed, r, dict(kwargs, method=inner)) for r in range(replications)]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_worker, tasks, chunksize=max(1, replications // (4 * n_jobs))))
    else:
        results = [_worker(t) for t in tasks]
    results.sort(key=lambda r: r["replication"])
    ok = [r for r in results if "error" not in r]
    failures = len(results) - len(ok)
    if failures:
        log.warning("%d of %d replications failed and were excluded", failures, replications)
    gl = summarize([r["group_lasso"] for r in ok]) if ok else None
    ad = summarize([r["adaptive"] for r in ok]) if ok and inner == "both" else None
    opts = kwargs.get("opts")
    options = {k: v for k, v in kwargs.items() if k != "opts"}
    options["solver"] = asdict(opts or SolverOptions())
    return ReplicationReport(
        spec=spec,
        replications=replications,
        seed=seed,
        method=method,
        group_lasso=gl if method != "adaptive" else None,
        adaptive=ad,
        records=results,
        failures=failures,
        options=options,
    )

"""Finite-sample evaluation of the group lasso selection and rate bounds.

Given a concrete design, a true coefficient vector and a penalty level, this
module computes every constant that enters the selection theorems (sparsity
profile, sparse Riesz spectrum bounds, ``r1``, ``r2``, ``M1``-``M3``, ``B1``,
``lambda_{n,p}``, ``lambda_0``) and checks the inequalities on a fitted model.
The theorems are probabilistic, so a failure on one draw is reported, not
raised; :mod:`grouplasso.simulation` tracks frequencies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np
from scipy import linalg

from .model import GroupedCoefficients, GroupedDesign, extract_submatrix, zero_tolerance

__all__ = [
    "SparsityProfile",
    "SrcCertificate",
    "TheoremBounds",
    "SelectionDiagnostics",
    "sparsity_profile",
    "verify_src",
    "eta2",
    "lambda_np",
    "eval_bounds",
    "m_constants",
    "selection_diagnostics",
    "check_theorem1",
    "check_conditions_c",
    "check_theorem2_4",
]

SRC_CAP = 100_000
ETA2_MAX_EXHAUSTIVE = 20


@dataclass(frozen=True)
class SparsityProfile:
    A0: frozenset[int]
    q: int
    eta1: float
    is_nsc: bool
    theta_a: float
    theta_b: float
    d_a: int
    d_b: int
    N_d: int
    p: int

    @property
    def important(self) -> frozenset[int]:
        return frozenset(range(self.p)) - self.A0

    @property
    def d(self) -> float:
        return self.d_a / self.d_b


@dataclass(frozen=True)
class SrcCertificate:
    """Spectrum bounds of ``X_A' X_A / n`` over groups subsets of size ``q_star``.

    Exhaustive certificates cover every subset; sampled ones only give inner
    estimates of the true bounds and certify nothing.
    """

    q_star: int
    c_lower: float
    c_upper: float
    exhaustive: bool
    subsets_checked: int
    argmin_subset: tuple[int, ...]
    argmax_subset: tuple[int, ...]
    rtol: float = 1e-10

    @property
    def c_bar(self) -> float:
        return self.c_upper / self.c_lower if self.c_lower > 0 else math.inf

    @property
    def satisfied(self) -> bool:
        """Positive lower bound (up to ``rtol`` relative to the upper one)."""
        return self.c_lower > self.rtol * self.c_upper

    @property
    def certifying(self) -> bool:
        return self.exhaustive and self.satisfied


@dataclass(frozen=True)
class TheoremBounds:
    lam: float
    q: int
    q_star: int
    d_a: int
    d_b: int
    d: float
    N_d: int
    c_lower: float
    c_upper: float
    c_bar: float
    eta1: float
    eta2: float
    r1: float
    r2: float
    M1: float
    M2: float
    M3: float
    B1: float
    B1_proof: float
    lambda_np: float
    lambda_0: float
    sigma: float
    c0: float
    a_n: float
    n: int
    constraint_ok: bool
    q_hat_bound: float
    omega2_bound: float
    zeta2_bound: float
    selection_threshold: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SelectionDiagnostics:
    q_hat: int
    selected: frozenset[int]
    omega_tilde: float
    zeta2: float
    projected_norm: float
    mean_norm: float


def sparsity_profile(beta_true: GroupedCoefficients, A0: Iterable[int]) -> SparsityProfile:
    """Split groups into the "small" set ``A0`` and the important rest."""
    g = beta_true.groups
    A0 = frozenset(int(k) for k in A0)
    for k in A0:
        g._check_index(k)
    norms = beta_true.norms()
    imp = [k for k in range(g.p) if k not in A0]
    eta1 = float(sum(norms[k] for k in A0))
    theta = norms[imp] if imp else np.zeros(0)
    return SparsityProfile(
        A0=A0,
        q=len(imp),
        eta1=eta1,
        is_nsc=eta1 == 0.0,
        theta_a=float(theta.max()) if imp else 0.0,
        theta_b=float(theta.min()) if imp else 0.0,
        d_a=g.d_max,
        d_b=g.d_min,
        N_d=g.n_coef,
        p=g.p,
    )


def verify_src(
    design: GroupedDesign,
    q_star: int,
    mode: str = "exhaustive",
    samples: int = 1000,
    seed: int = 0,
    cap: int = SRC_CAP,
) -> SrcCertificate:
    """Extreme eigenvalues of ``Sigma_AA`` over group subsets with ``|A| = q_star``.

    ``mode="exhaustive"`` visits all ``C(p, q_star)`` subsets and refuses to run
    when that exceeds ``cap``; ``mode="sampled"`` visits ``samples`` random
    subsets.
    """
    p = design.p
    if not 1 <= q_star <= p:
        raise ValueError(f"q_star must be in 1..{p}, got {q_star}")
    if mode == "exhaustive":
        total = math.comb(p, q_star)
        if total > cap:
            raise ValueError(
                f"exhaustive SRC needs {total} subsets (cap {cap}); use mode='sampled'"
            )
        subsets = itertools.combinations(range(p), q_star)
    elif mode == "sampled":
        rng = np.random.default_rng(seed)
        subsets = (tuple(sorted(rng.choice(p, q_star, replace=False))) for _ in range(samples))
    else:
        raise ValueError(f"unknown SRC mode {mode!r}")
    lo, hi = math.inf, -math.inf
    arg_lo = arg_hi = ()
    count = 0
    X = design.matrix
    for A in subsets:
        cols = design.groups.columns(A)
        XA = X[:, cols]
        ev = linalg.eigh(XA.T @ XA / design.n, eigvals_only=True)
        if ev[0] < lo:
            lo, arg_lo = float(ev[0]), tuple(int(a) for a in A)
        if ev[-1] > hi:
            hi, arg_hi = float(ev[-1]), tuple(int(a) for a in A)
        count += 1
    return SrcCertificate(q_star, max(lo, 0.0), hi, mode == "exhaustive", count, arg_lo, arg_hi)


def eta2(
    design: GroupedDesign,
    beta_true: GroupedCoefficients,
    A0: Iterable[int],
    mode: str = "exhaustive",
    samples: int = 1000,
    seed: int = 0,
) -> float:
    """``max_{A subset A0} || sum_{k in A} X_k beta_k ||``.

    Zero blocks contribute nothing, so the exhaustive search runs over subsets
    of the nonzero blocks in ``A0`` only (at most 20 of them). The sampled
    mode returns a lower bound.
    """
    A0 = sorted(int(k) for k in A0)
    tol = zero_tolerance()
    norms = beta_true.norms()
    live = [k for k in A0 if norms[k] > tol]
    if not live:
        return 0.0
    contrib = np.column_stack([design.block(k) @ beta_true.block(k) for k in live])
    m = len(live)
    if mode == "exhaustive":
        if m > ETA2_MAX_EXHAUSTIVE:
            raise ValueError(f"{m} nonzero blocks in A0; exhaustive search capped at 20")
        best = 0.0
        # all 2^m subsets as 0/1 masks, in chunks
        for start in range(0, 2**m, 4096):
            idx = np.arange(start, min(start + 4096, 2**m))
            masks = (idx[:, None] >> np.arange(m)) & 1
            vals = np.linalg.norm(contrib @ masks.T, axis=0)
            best = max(best, float(vals.max()))
        return best
    if mode == "sampled":
        rng = np.random.default_rng(seed)
        masks = rng.integers(0, 2, size=(samples, m))
        return float(np.linalg.norm(contrib @ masks.T, axis=0).max())
    raise ValueError(f"unknown eta2 mode {mode!r}")


def lambda_np(sigma: float, d_a: int, d: float, q_star: int, c_bar: float, n: int,
              c_upper: float, N_d: int, c0: float = 0.0, a_n: float = 0.0) -> float:
    """``2 sigma sqrt(8 (1 + c0) d_a d^2 q* cbar n c* log(max(N_d, a_n)))``."""
    return 2 * sigma * math.sqrt(
        8 * (1 + c0) * d_a * d**2 * q_star * c_bar * n * c_upper * math.log(max(N_d, a_n))
    )


def m_constants(r1: float, r2: float, d: float, c_bar: float) -> tuple[float, float, float]:
    dc = d * c_bar
    M1 = 2 + 4 * r1**2 + 4 * math.sqrt(dc) * r2 + 4 * dc
    M2 = (2 / 3) * (
        1 + 4 * r1**2 + 2 * dc
        + 4 * math.sqrt(2 * d) * (1 + math.sqrt(c_bar)) * math.sqrt(c_bar) * r2
        + (16 / 3) * d * c_bar**2
    )
    M3 = (2 / 3) * (
        1 + 4 * r1**2 + 4 * math.sqrt(dc) * (1 + 2 * math.sqrt(1 + c_bar)) * r2
        + 3 * r2**2 + (2 / 3) * dc * (7 + 4 * c_bar)
    )
    return M1, M2, M3


def _r_terms(lam, n, c_up, d_a, d_b, q, e1, e2):
    """``(r1^2 q, r2^2 q)``; well defined for q = 0 as well."""
    return n * c_up * math.sqrt(d_a) * e1 / (lam * d_b), n * c_up * e2**2 / (lam**2 * d_b)


def _m1_times_q(lam, n, c_up, d_a, d_b, d, c_bar, q, e1, e2) -> float:
    r1q, r2q = _r_terms(lam, n, c_up, d_a, d_b, q, e1, e2)
    if q == 0:
        return 4 * r1q
    return q * m_constants(math.sqrt(r1q / q), math.sqrt(r2q / q), d, c_bar)[0]


def _lambda_0(q_star, n, c_up, d_a, d_b, d, c_bar, q, e1, e2, lo=1e-8, hi=1e12, iters=200):
    """``inf {lam : M1(lam) q + 1 <= q*}`` by bisection (M1 decreases in lam)."""
    ok = lambda lam: _m1_times_q(lam, n, c_up, d_a, d_b, d, c_bar, q, e1, e2) + 1 <= q_star
    if not ok(hi):
        return math.inf
    if ok(lo):
        return lo
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def eval_bounds(
    profile: SparsityProfile,
    src: SrcCertificate,
    n: int,
    sigma: float,
    lam: float,
    c0: float = 0.0,
    a_n: float = 0.0,
    eta2_value: float = 0.0,
) -> TheoremBounds:
    """All selection-bound constants for one instance and penalty level.

    For ``q = 0`` the ratio forms are replaced by ``r1^2 q`` and ``r2^2 q``
    directly; ``r1``, ``r2`` and ``M1``-``M3`` are then reported as ``nan`` and
    the bound fields carry the limiting values.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not src.satisfied:
        raise ValueError("SRC lower bound is zero; c_bar is undefined")
    q, d_a, d_b, d = profile.q, profile.d_a, profile.d_b, profile.d
    c_lo, c_up, c_bar = src.c_lower, src.c_upper, src.c_bar
    e1, e2 = profile.eta1, eta2_value
    r1q, r2q = _r_terms(lam, n, c_up, d_a, d_b, q, e1, e2)
    lnp = lambda_np(sigma, d_a, d, src.q_star, c_bar, n, c_up, profile.N_d, c0, a_n)
    lam0 = _lambda_0(src.q_star, n, c_up, d_a, d_b, d, c_bar, q, e1, e2)
    B1 = math.sqrt(lam**2 * d_b**2 * q / (n * c_up))
    B1_proof = math.sqrt(lam**2 * d_b * q / (n * c_up))
    if q >= 1:
        r1, r2 = math.sqrt(r1q / q), math.sqrt(r2q / q)
        M1, M2, M3 = m_constants(r1, r2, d, c_bar)
        q_hat_bound = M1 * q
        omega2_bound = M2 * B1**2
        zeta2_bound = M3 * B1**2 / (c_lo * n)
        thresh = M3 * q * lam**2 / (c_lo * c_up * n**2)
    else:
        r1 = r2 = M1 = M2 = M3 = math.nan
        q_hat_bound = 4 * r1q
        omega2_bound = 8 * lam * math.sqrt(d_a) * d_b * e1 / 3
        zeta2_bound = 0.0
        thresh = math.inf
    return TheoremBounds(
        lam=lam, q=q, q_star=src.q_star, d_a=d_a, d_b=d_b, d=d, N_d=profile.N_d,
        c_lower=c_lo, c_upper=c_up, c_bar=c_bar, eta1=e1, eta2=e2,
        r1=r1, r2=r2, M1=M1, M2=M2, M3=M3, B1=B1, B1_proof=B1_proof,
        lambda_np=lnp, lambda_0=lam0, sigma=sigma, c0=c0, a_n=a_n, n=n,
        constraint_ok=lam >= max(lam0, lnp),
        q_hat_bound=q_hat_bound, omega2_bound=omega2_bound, zeta2_bound=zeta2_bound,
        selection_threshold=thresh,
    )


def _projector_basis(XA: np.ndarray) -> np.ndarray:
    if XA.shape[1] == 0:
        return np.zeros((XA.shape[0], 0))
    return linalg.orth(XA)


def selection_diagnostics(
    design: GroupedDesign,
    beta_true: GroupedCoefficients,
    beta_hat: GroupedCoefficients,
    A0: Iterable[int] | None = None,
    tol: float | None = None,
) -> SelectionDiagnostics:
    """Selected-model size, unexplained mean norm and missed-signal norm.

    ``A0`` defaults to the groups where ``beta_true`` is zero.
    """
    tol = zero_tolerance() if tol is None else tol
    sel = beta_hat.active_set(tol)
    if A0 is None:
        A0 = frozenset(range(design.p)) - beta_true.active_set(0.0)
    A0 = frozenset(A0)
    mu = design.matrix @ beta_true.values
    U = _projector_basis(extract_submatrix(design, sel))
    proj = U @ (U.T @ mu)
    omega = float(np.linalg.norm(mu - proj))
    norms = beta_true.norms()
    missed = [k for k in range(design.p) if k not in A0 and k not in sel]
    zeta2 = float(math.sqrt(sum(norms[k] ** 2 for k in missed)))
    return SelectionDiagnostics(
        q_hat=len(sel),
        selected=sel,
        omega_tilde=omega,
        zeta2=zeta2,
        projected_norm=float(np.linalg.norm(proj)),
        mean_norm=float(np.linalg.norm(mu)),
    )


def projector(design: GroupedDesign, groups: Iterable[int]) -> np.ndarray:
    """Orthogonal projector onto the span of the columns of ``groups``."""
    U = _projector_basis(extract_submatrix(design, groups))
    return U @ U.T


@dataclass
class CheckReport:
    """Named inequality checks: ``name -> (lhs, rhs, holds)``."""

    checks: dict[str, tuple[float, float, bool]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def add(self, name: str, lhs: float, rhs: float):
        self.checks[name] = (float(lhs), float(rhs), bool(lhs <= rhs))

    @property
    def all_hold(self) -> bool:
        return all(v[2] for v in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "checks": {k: {"lhs": a, "rhs": b, "holds": h} for k, (a, b, h) in self.checks.items()},
            "notes": list(self.notes),
            "all_hold": self.all_hold,
        }


def check_theorem1(
    bounds: TheoremBounds,
    diag: SelectionDiagnostics,
    profile: SparsityProfile,
    beta_true: GroupedCoefficients | None = None,
) -> CheckReport:
    """Evaluate the three selection assertions and the selection threshold."""
    rep = CheckReport()
    if not bounds.constraint_ok:
        rep.notes.append(
            f"lambda={bounds.lam:.6g} is below max(lambda_0, lambda_np)="
            f"{max(bounds.lambda_0, bounds.lambda_np):.6g}; assertions not guaranteed"
        )
    union = len(diag.selected | profile.important)
    rep.add("q_hat <= |selected or important|", diag.q_hat, union)
    rep.add("|selected or important| <= M1 q", union, bounds.q_hat_bound)
    rep.add("omega^2 <= M2 B1^2", diag.omega_tilde**2, bounds.omega2_bound)
    rep.add("zeta2^2 <= M3 B1^2 / (c_* n)", diag.zeta2**2, bounds.zeta2_bound)
    if beta_true is not None:
        norms = beta_true.norms()
        big = [k for k in range(profile.p) if norms[k] ** 2 > bounds.selection_threshold]
        missed = [k for k in big if k not in diag.selected]
        rep.add("large groups missed", len(missed), 0)
    return rep


def check_conditions_c(
    profile: SparsityProfile,
    design: GroupedDesign,
    n: int,
    lambda_tilde: float,
    r_n: float,
    p: int | None = None,
) -> dict:
    """Magnitudes of the adaptive-stage rate conditions and the important-block spectrum.

    The rate conditions are asymptotic; only their numeric values are
    reported. Ratios involving ``log(p - q)`` are ``nan`` when ``p == q``.
    """
    if profile.q < 1:
        raise ValueError("no important groups (A0 covers everything)")
    p = profile.p if p is None else p
    q, d_a, d_b, d, N_d = profile.q, profile.d_a, profile.d_b, profile.d, profile.N_d
    tb = profile.theta_b
    log_pq = math.log(p - q) if p > q else math.nan
    c3 = {
        "sqrt(d_a log q)/(sqrt(n) theta_b)": math.sqrt(d_a * math.log(q)) / (math.sqrt(n) * tb),
        "lambda_tilde d_a^1.5 q/(n theta_b^2)": lambda_tilde * d_a**1.5 * q / (n * tb**2),
        "sqrt(n d log(p-q))/(lambda_tilde r_n)": math.sqrt(n * d * log_pq) / (lambda_tilde * r_n),
        "d_a^2.5 q^2/(r_n theta_b sqrt(d_b))": d_a**2.5 * q**2 / (r_n * tb * math.sqrt(d_b)),
    }
    c3_star = {
        "sqrt(d_a log q)/(sqrt(n) theta_b)": c3["sqrt(d_a log q)/(sqrt(n) theta_b)"],
        "lambda_tilde d_a^1.5 q/(n theta_b^2)": c3["lambda_tilde d_a^1.5 q/(n theta_b^2)"],
        "sqrt(d q log(p-q) log N_d)/lambda_tilde":
            math.sqrt(d * q * log_pq * math.log(N_d)) / lambda_tilde,
        "(d_a q)^2.5 sqrt(log N_d)/(theta_b sqrt(n d_b))":
            (d_a * q) ** 2.5 * math.sqrt(math.log(N_d)) / (tb * math.sqrt(n * d_b)),
    }
    imp = sorted(profile.important)
    ev = linalg.eigh(design.gram(imp), eigvals_only=True)
    return {
        "C3": c3,
        "C3_star": c3_star,
        "C4": {"groups": imp, "min_eigenvalue": float(ev[0]), "max_eigenvalue": float(ev[-1])},
        "lambda_tilde": lambda_tilde,
        "r_n": r_n,
    }


def check_theorem2_4(
    bounds: TheoremBounds,
    beta_true: GroupedCoefficients,
    beta_hat: GroupedCoefficients,
    design: GroupedDesign,
    n: int | None = None,
) -> dict:
    """Realized estimation/prediction errors against the rate bounds.

    Returns the two right-hand sides, the realized errors, their ratios and
    whether each inequality holds.
    """
    n = design.n if n is None else n
    b = bounds
    q = b.q
    diff = beta_hat.values - beta_true.values
    est = float(np.linalg.norm(diff))
    pred = float(np.linalg.norm(design.matrix @ diff))
    if q >= 1:
        core = 2 * b.sigma * math.sqrt(b.M1 * math.log(b.N_d) * q)
        root = math.sqrt(b.d * b.M1 * b.c_bar)
        est_bound = (core + (b.r2 + root) * b.B1) / math.sqrt(n * b.c_lower) + math.sqrt(
            (b.c_lower * b.r1**2 + b.r2**2) / (b.c_lower * b.c_upper)
        ) * math.sqrt(q) * b.lam / n
        pred_bound = core + (2 * b.r2 + root) * b.B1
    else:
        est_bound = pred_bound = math.nan
    return {
        "estimation_error": est,
        "estimation_bound": est_bound,
        "estimation_ratio": est / est_bound if est_bound > 0 else math.nan,
        "estimation_holds": bool(est <= est_bound),
        "prediction_error": pred,
        "prediction_bound": pred_bound,
        "prediction_ratio": pred / pred_bound if pred_bound > 0 else math.nan,
        "prediction_holds": bool(pred <= pred_bound),
        "group_lasso_rate": math.sqrt(q * math.log(b.N_d) / n),
        "adaptive_rate": math.sqrt(q / n),
    }

import itertools
import math

import numpy as np
import pytest

from conftest import random_instance
from grouplasso.model import GroupedCoefficients, GroupedDesign, GroupStructure
from grouplasso.simulation import example_spec, generate
from grouplasso.solver import PenaltyConfig, fit, lambda_max
from grouplasso.theory import (
    check_conditions_c,
    check_theorem1,
    check_theorem2_4,
    eta2,
    eval_bounds,
    lambda_np,
    m_constants,
    projector,
    selection_diagnostics,
    sparsity_profile,
    verify_src,
)


def _orthonormal_design(n, sizes, seed=0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, sum(sizes))))
    return GroupedDesign(Q * np.sqrt(n), sizes)


# ------------------------------------------------------------- sparsity profile


def test_profile_example1():
    b = example_spec(1).beta_true
    prof = sparsity_profile(b, range(2, 10))
    assert prof.q == 2 and prof.eta1 == 0 and prof.is_nsc
    assert prof.theta_a == pytest.approx(2 * math.sqrt(5))
    assert prof.theta_b == pytest.approx(math.sqrt(13.75))
    assert prof.d == 1 and prof.N_d == 50


def test_profile_gsc():
    vals = np.array(example_spec(1).beta)
    vals[10] = 0.1
    prof = sparsity_profile(GroupedCoefficients(vals, (5,) * 10), range(2, 10))
    assert prof.eta1 == pytest.approx(0.1) and not prof.is_nsc
    with pytest.raises(IndexError):
        sparsity_profile(GroupedCoefficients(vals, (5,) * 10), [10])


# ------------------------------------------------------------- SRC


def test_src_orthonormal_design():
    D = _orthonormal_design(40, (2, 3, 1, 2))
    for q in (1, 2, 4):
        c = verify_src(D, q)
        assert c.c_lower == pytest.approx(1) and c.c_upper == pytest.approx(1)
        assert c.c_bar == pytest.approx(1) and c.certifying


def test_src_detects_duplicate_groups():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((30, 2))
    D = GroupedDesign(np.hstack([A, A, rng.standard_normal((30, 2))]), (2, 2, 2))
    c = verify_src(D, 2)
    assert not c.satisfied
    assert set(c.argmin_subset) == {0, 1}
    with pytest.raises(ValueError):
        eval_bounds(sparsity_profile(GroupedCoefficients(np.ones(6), (2, 2, 2)), []), c, 30, 1, 1)


def test_src_soundness_and_crosscheck():
    D, _, _ = generate(example_spec(1), seed=0)
    cert = verify_src(D, 4)
    assert cert.subsets_checked == math.comb(10, 4)
    X = D.matrix
    for A in itertools.combinations(range(10), 4):
        cols = D.groups.columns(A)
        ev = np.linalg.eigvalsh(X[:, cols].T @ X[:, cols] / D.n)
        assert ev[0] >= cert.c_lower - 1e-12 and ev[-1] <= cert.c_upper + 1e-12
    for A in (cert.argmin_subset, cert.argmax_subset):
        cols = D.groups.columns(A)
        ev = np.linalg.eigvalsh(X[:, cols].T @ X[:, cols] / D.n)
        assert cert.c_lower == pytest.approx(ev[0], rel=1e-10) or cert.c_upper == pytest.approx(ev[-1], rel=1e-10)
    rng = np.random.default_rng(1)
    for _ in range(5):
        A = sorted(rng.choice(10, 4, replace=False))
        G = X[:, D.groups.columns(A)]
        ev = np.linalg.eigvals(G.T @ G / D.n).real  # general solver as a second opinion
        assert cert.c_lower - 1e-10 <= ev.min() and ev.max() <= cert.c_upper + 1e-10


def test_src_cap_and_sampling():
    D, _, _ = generate(example_spec(3, n=50), seed=0)
    with pytest.raises(ValueError, match="sampled"):
        verify_src(D, 5)
    s = verify_src(D, 2, mode="sampled", samples=50)
    assert not s.exhaustive and not s.certifying and s.subsets_checked == 50
    with pytest.raises(ValueError):
        verify_src(D, 0)


# ------------------------------------------------------------- eta2


def test_eta2_nsc_and_singleton():
    D, _, b = generate(example_spec(1), seed=0)
    assert eta2(D, b, range(2, 10)) == 0.0
    vals = np.zeros(50)
    vals[20:25] = [1, -1, 0.5, 0, 2]
    b1 = GroupedCoefficients(vals, (5,) * 10)
    assert eta2(D, b1, range(2, 10)) == pytest.approx(np.linalg.norm(D.block(4) @ vals[20:25]))


def test_eta2_brute_force():
    D, _, _ = generate(example_spec(1), seed=3)
    rng = np.random.default_rng(2)
    vals = np.zeros(50)
    vals[:10] = 2.0
    for k in (3, 7, 8):
        vals[5 * k:5 * k + 5] = rng.standard_normal(5) * 0.3
    b = GroupedCoefficients(vals, (5,) * 10)
    A0 = list(range(2, 10))
    brute = max(
        np.linalg.norm(sum((D.block(k) @ b.block(k) for k in A), np.zeros(D.n)))
        for r in range(len(A0) + 1)
        for A in itertools.combinations(A0, r)
    )
    assert eta2(D, b, A0) == pytest.approx(brute, rel=1e-12)
    assert eta2(D, b, A0, mode="sampled", samples=20) <= brute + 1e-12


# ------------------------------------------------------------- bounds


def test_nsc_closed_forms():
    assert m_constants(0, 0, 1, 1) == pytest.approx((6, 50 / 9, 50 / 9), rel=1e-12)
    for d, cb in [(1.0, 3.0), (5 / 3, 2.0)]:
        M1, M2, M3 = m_constants(0, 0, d, cb)
        assert M1 == pytest.approx(2 + 4 * d * cb, rel=1e-12)
        assert M2 == pytest.approx((2 / 3) * (1 + 2 * d * cb + 16 / 3 * d * cb**2), rel=1e-12)
        assert M3 == pytest.approx((2 / 3) * (1 + (2 / 3) * d * cb * (7 + 4 * cb)), rel=1e-12)


def _instance_bounds(lam, spec_id=1, seed=0):
    spec = example_spec(spec_id)
    D, y, b = generate(spec, seed)
    prof = sparsity_profile(b, [k for k in range(spec.p) if k not in spec.true_groups])
    src = verify_src(D, spec.p) if spec.p <= 10 else None
    return D, y, b, prof, src


def test_eval_bounds_nsc_via_orthonormal_design():
    D = _orthonormal_design(60, (2,) * 4)
    b = GroupedCoefficients.from_blocks([[1, 1], [0, 0], [0, 0], [0, 0]])
    prof = sparsity_profile(b, [1, 2, 3])
    src = verify_src(D, 4)
    bd = eval_bounds(prof, src, 60, 1.0, 5.0)
    assert (bd.M1, bd.M2, bd.M3) == pytest.approx((6, 50 / 9, 50 / 9), rel=1e-12)
    assert bd.r1 == 0 and bd.r2 == 0
    assert bd.B1 == pytest.approx(math.sqrt(25 * 4 * 1 / 60))
    assert bd.B1_proof == pytest.approx(math.sqrt(25 * 2 * 1 / 60))


def test_r1_zero_when_eta1_zero():
    D, y, b, prof, src = _instance_bounds(1.0)
    for lam in (0.1, 10.0, 1e4):
        assert eval_bounds(prof, src, 200, 3.0, lam).r1 == 0.0


def test_gsc_constants_and_monotone_m1():
    D, y, b, _, src = _instance_bounds(1.0)
    vals = np.array(b.values)
    vals[10:15] = 0.2
    bb = GroupedCoefficients(vals, b.groups)
    prof = sparsity_profile(bb, range(2, 10))
    e2 = eta2(D, bb, prof.A0)
    bounds = [eval_bounds(prof, src, 200, 3.0, lam, eta2_value=e2) for lam in (10, 100, 1000)]
    r1 = math.sqrt(200 * src.c_upper * math.sqrt(5) * prof.eta1 / (10 * 5 * 2))
    assert bounds[0].r1 == pytest.approx(r1)
    r2 = math.sqrt(200 * src.c_upper * e2**2 / (100 * 5 * 2))
    assert bounds[0].r2 == pytest.approx(r2)
    assert bounds[0].M1 > bounds[1].M1 > bounds[2].M1 > 2


def test_lambda_np_two_ways():
    spec = example_spec(3)
    g = spec.groups
    sigma, c0, cu, cl, qs, n = 3.0, 0.1, 2.5, 0.2, 12, 200
    d_a, d = g.d_max, g.d_ratio
    formula = lambda_np(sigma, d_a, d, qs, cu / cl, n, cu, g.n_coef, c0)
    logs = (math.log(2) + math.log(sigma)
            + 0.5 * (math.log(8) + math.log1p(c0) + math.log(d_a) + 2 * math.log(d)
                     + math.log(qs) + math.log(cu) - math.log(cl) + math.log(n)
                     + math.log(cu) + math.log(math.log(g.n_coef))))
    assert formula == pytest.approx(math.exp(logs), rel=1e-10)
    # a_n only matters when it exceeds N_d
    assert lambda_np(1, 5, 1, 4, 2, 100, 1, 50, 0, 10) == lambda_np(1, 5, 1, 4, 2, 100, 1, 50)
    assert lambda_np(1, 5, 1, 4, 2, 100, 1, 50, 0, 1e6) > lambda_np(1, 5, 1, 4, 2, 100, 1, 50)


def test_lambda0_bisection():
    D = _orthonormal_design(100, (1,) * 20)
    vals = np.zeros(20)
    vals[:2] = 1.0
    vals[5] = 0.05
    b = GroupedCoefficients(vals, (1,) * 20)
    prof = sparsity_profile(b, range(2, 20))
    src = verify_src(D, 16)
    e2 = eta2(D, b, prof.A0)
    bd = eval_bounds(prof, src, 100, 1.0, 1.0, eta2_value=e2)
    lam0 = bd.lambda_0
    assert math.isfinite(lam0)
    at = eval_bounds(prof, src, 100, 1.0, lam0 * (1 + 1e-9), eta2_value=e2)
    below = eval_bounds(prof, src, 100, 1.0, lam0 * (1 - 1e-6), eta2_value=e2)
    assert at.M1 * 2 + 1 <= 16 < below.M1 * 2 + 1
    # NSC with M1 q + 1 > q* at every lambda: unattainable
    prof_nsc = sparsity_profile(b, [k for k in range(20) if k not in (0, 1, 5)])
    assert eval_bounds(prof_nsc, verify_src(D, 4), 100, 1.0, 1.0).lambda_0 == math.inf


def test_q_zero_substitution():
    D = _orthonormal_design(50, (2,) * 5)
    vals = np.zeros(10)
    vals[2:4] = [0.3, 0.4]
    b = GroupedCoefficients(vals, (2,) * 5)
    prof = sparsity_profile(b, range(5))
    assert prof.q == 0
    src = verify_src(D, 3)
    lam = 7.0
    bd = eval_bounds(prof, src, 50, 1.0, lam, eta2_value=eta2(D, b, prof.A0))
    assert bd.q_hat_bound == pytest.approx(4 * 50 * 1 * math.sqrt(2) * 0.5 / (lam * 2))
    assert bd.omega2_bound == pytest.approx(8 * lam * math.sqrt(2) * 2 * 0.5 / 3)
    assert bd.zeta2_bound == 0.0 and math.isnan(bd.M1)


def test_scalar_case_reduces():
    """All d_k = 1 gives d = 1 and the scalar-lasso constants."""
    D = _orthonormal_design(40, (1,) * 6)
    b = GroupedCoefficients(np.array([1.0, -1, 0, 0, 0, 0]), (1,) * 6)
    prof = sparsity_profile(b, range(2, 6))
    bd = eval_bounds(prof, verify_src(D, 4), 40, 1.0, 2.0)
    assert prof.d == 1 and bd.M1 == pytest.approx(2 + 4 * bd.c_bar)
    assert bd.B1 == pytest.approx(bd.B1_proof)


# ------------------------------------------------------------- diagnostics


def test_exact_selection_gives_zero_zeta_and_omega():
    D, y, b = generate(example_spec(1), seed=1)
    diag = selection_diagnostics(D, b, b)
    assert diag.zeta2 == 0.0 and diag.omega_tilde == pytest.approx(0, abs=1e-9)
    assert diag.q_hat == 2


def test_empty_selection():
    D, y, b = generate(example_spec(1), seed=1)
    diag = selection_diagnostics(D, b, GroupedCoefficients.zeros(b.groups))
    assert diag.q_hat == 0
    assert diag.omega_tilde == pytest.approx(np.linalg.norm(D.matrix @ b.values))
    assert diag.zeta2 == pytest.approx(math.sqrt(13.75 + 20))


@pytest.mark.parametrize("seed", range(5))
def test_pythagoras_and_idempotence(seed):
    D, y, b = random_instance(seed, 30, (2, 3, 1, 2, 2))
    bt = GroupedCoefficients(b, D.groups)
    res = fit(D, y, PenaltyConfig(0.3 * lambda_max(D, y)))
    diag = selection_diagnostics(D, bt, res.beta)
    assert diag.omega_tilde**2 + diag.projected_norm**2 == pytest.approx(diag.mean_norm**2, rel=1e-8)
    P = projector(D, res.beta.active_set())
    v = np.random.default_rng(seed).standard_normal(30)
    assert np.linalg.norm(P @ (P @ v) - P @ v) <= 1e-10 * np.linalg.norm(v)


def test_theorem1_report_on_exact_selection():
    D, y, b, prof, src = _instance_bounds(1.0)
    bd = eval_bounds(prof, src, 200, 3.0, 50.0)
    diag = selection_diagnostics(D, b, b)
    rep = check_theorem1(bd, diag, prof, b)
    assert rep.checks["zeta2^2 <= M3 B1^2 / (c_* n)"][2]
    assert rep.checks["q_hat <= |selected or important|"][0] == diag.q_hat
    assert rep.all_hold
    assert rep.notes  # lambda below the constraint is reported, not rejected


def test_conditions_report():
    D, y, b, prof, src = _instance_bounds(1.0)
    rep = check_conditions_c(prof, D, 200, 20.0, 5.0)
    c4 = rep["C4"]
    assert 0 < c4["min_eigenvalue"] <= c4["max_eigenvalue"] < np.inf
    bigger = sparsity_profile(GroupedCoefficients(2 * b.values, b.groups), prof.A0)
    rep2 = check_conditions_c(bigger, D, 200, 20.0, 5.0)
    for key in ("C3", "C3_star"):
        for name, v in rep[key].items():
            if "theta_b" in name:
                assert rep2[key][name] < v
    full = sparsity_profile(GroupedCoefficients(np.ones(50), b.groups), [])
    rep3 = check_conditions_c(full, D, 200, 20.0, 5.0)
    ev = np.linalg.eigvalsh(D.gram())
    assert rep3["C4"]["min_eigenvalue"] == pytest.approx(ev[0])
    assert rep3["C4"]["max_eigenvalue"] == pytest.approx(ev[-1])
    none = sparsity_profile(b, range(10))
    with pytest.raises(ValueError):
        check_conditions_c(none, D, 200, 20.0, 5.0)


def test_theorem2_zero_error_at_truth():
    D, y, b, prof, src = _instance_bounds(1.0)
    bd = eval_bounds(prof, src, 200, 3.0, 50.0)
    rep = check_theorem2_4(bd, b, b, D)
    assert rep["estimation_error"] == 0 and rep["estimation_ratio"] == 0
    assert rep["prediction_ratio"] == 0 and rep["estimation_holds"]


def test_theorem2_bound_formula():
    D, y, b, prof, src = _instance_bounds(1.0)
    bd = eval_bounds(prof, src, 200, 3.0, 80.0)
    rep = check_theorem2_4(bd, b, GroupedCoefficients.zeros(b.groups), D)
    core = 2 * 3.0 * math.sqrt(bd.M1 * math.log(50) * 2)
    pred = core + math.sqrt(bd.d * bd.M1 * bd.c_bar) * bd.B1
    assert rep["prediction_bound"] == pytest.approx(pred)
    est = (core + math.sqrt(bd.d * bd.M1 * bd.c_bar) * bd.B1) / math.sqrt(200 * bd.c_lower)
    assert rep["estimation_bound"] == pytest.approx(est)


def test_rate_sanity_doubling_n():
    """Median estimation error shrinks when n doubles at fixed q."""
    errs = {}
    for n in (100, 400):
        spec = example_spec(1, n=n)
        vals = []
        for rep in range(15):
            D, y, b = generate(spec, seed=11, replication=rep)
            res = fit(D, y, PenaltyConfig(0.1 * lambda_max(D, y)))
            vals.append(np.linalg.norm(res.beta.values - b.values))
        errs[n] = np.median(vals)
    assert errs[400] < errs[100]


def test_structure_helpers_on_unequal_groups():
    g = GroupStructure((5, 3))
    b = GroupedCoefficients(np.ones(8), g)
    prof = sparsity_profile(b, [])
    assert prof.d_a == 5 and prof.d_b == 3 and prof.d == pytest.approx(5 / 3)

"""Command-line front end.

Subcommands::

    simulate   benchmark examples 1-6 over seeded replications
    fit        group lasso or adaptive group lasso on a CSV data set
    path       full penalty path with its BIC table
    diagnose   selection-bound constants and checks for a known truth

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import asdict, dataclass, fields
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .adaptive import adaptive_path
from .model import (
    GroupedCoefficients,
    GroupMapMismatch,
    map_back,
    orthonormalize_groups,
    read_group_map,
    read_grouped_csv,
    standardize,
)
from .selection import DF_RULES, select_by_bic, write_bic_csv
from .simulation import PUBLISHED_TABLE, PREPROCESSING, example_spec, run_replications
from .solver import PenaltyConfig, SolverOptions, fit, fit_path, lambda_grid, lambda_max
from .theory import (
    check_conditions_c,
    check_theorem1,
    check_theorem2_4,
    eta2,
    eval_bounds,
    selection_diagnostics,
    sparsity_profile,
    verify_src,
)

log = logging.getLogger("grouplasso")

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


class NumericalFailure(Exception):
    pass


@dataclass
class RunConfig:
    """Every option of every subcommand; unused ones stay at their defaults."""

    command: str = "simulate"
    # simulate
    example: int = 1
    reps: int = 400
    method: str = "both"
    jobs: int = 1
    preprocess: str | None = None
    # data input
    data: str | None = None
    groups: str | None = None
    response: str = "y"
    standardize: bool = False
    # penalty and tuning
    lam: str = "auto"
    lambda_tilde: str = "auto"
    df_rule: str = "coefficient_count"
    stage1_num: int = 100
    stage2_num: int = 50
    ratio: float = 1e-3
    max_df: int | None = None
    kkt_tol: float = 1e-6
    max_iters: int = 10000
    # diagnose
    beta: str | None = None
    a0: list[int] | None = None
    sigma: float | None = None
    q_star: int | None = None
    src_mode: str = "exhaustive"
    src_samples: int = 1000
    c0: float = 0.0
    a_n: float = 0.0
    r_n: float | None = None
    # common
    seed: int = 0
    out: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def solver_options(self) -> SolverOptions:
        return SolverOptions(kkt_tol=self.kkt_tol, max_iters=self.max_iters)


def _finite(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        items = sorted(obj) if isinstance(obj, (set, frozenset)) else obj
        return [_finite(v) for v in items]
    if isinstance(obj, np.ndarray):
        return _finite(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def _dump(obj, path: Path):
    path.write_text(json.dumps(_finite(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _envelope(cfg: RunConfig) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "grouplasso",
        "version": __version__,
        "command": cfg.command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }


def _parse_lambda(text: str, name: str) -> float | None:
    if text in ("auto", "bic"):
        return None
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"{name} must be a number or 'auto', got {text!r}") from None
    if not v >= 0:
        raise UsageError(f"{name} must be nonnegative")
    return v


# ---------------------------------------------------------------- simulate


def _table(report, spec) -> str:
    ref = PUBLISHED_TABLE.get(spec.example_id, {})
    lines = [
        f"Example {spec.example_id}: n={spec.n}, groups={spec.p}, "
        f"true groups={len(spec.true_groups)}, replications={report.replications}, "
        f"seed={report.seed}",
        f"{'method':<14}{'mean':>13}{'med':>6}{'[q25, q75]':>14}{'ME':>14}"
        f"{'RSS/n':>14}{'%incl':>14}{'%sel':>14}",
    ]
    for key, label in (("group_lasso", "group lasso"), ("adaptive", "adaptive")):
        m = getattr(report, key)
        if m is None:
            continue
        lines.append(
            f"{label:<14}"
            f"{m.mean_selected:>6.2f} ({m.sd_selected:.2f})"
            f"{m.median_selected:>6.0f}"
            f"{f'[{m.q25:g}, {m.q75:g}]':>14}"
            f"{m.model_error:>7.2f} ({m.model_error_sd:.2f})"
            f"{m.rss_per_n:>7.2f} ({m.rss_per_n_sd:.2f})"
            f"{m.pct_incl:>7.1f} ({m.pct_incl_sd:.1f})"
            f"{m.pct_sel:>7.1f} ({m.pct_sel_sd:.1f})"
        )
    for key, label in (("group_lasso", "published GL"), ("adaptive", "published AGL")):
        if key in ref:
            mean, med, me, incl, sel = ref[key]
            lines.append(
                f"{label:<14}{mean:>6.2f}{'':7}{med:>6.0f}{'':14}{me:>7.2f}{'':7}"
                f"{'':14}{incl:>7.1f}{'':7}{sel:>7.1f}"
            )
    lines.append(
        "Parentheses: across-replication SD. ME = (b - beta)' Sigma (b - beta); "
        "RSS/n = in-sample residual mean square. Failures: "
        f"{report.failures}."
    )
    return "\n".join(lines) + "\n"


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.example not in range(1, 7):
        raise UsageError(f"--example must be 1..6, got {cfg.example}")
    if cfg.reps < 1:
        raise UsageError("--reps must be at least 1")
    if cfg.df_rule not in DF_RULES:
        raise UsageError(f"--df-rule must be one of {DF_RULES}")
    preprocess = cfg.preprocess or "orthonormalize"
    if preprocess not in PREPROCESSING:
        raise UsageError(f"--preprocess must be one of {PREPROCESSING}")
    spec = example_spec(cfg.example)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    report = run_replications(
        spec,
        cfg.reps,
        seed=cfg.seed,
        method=cfg.method,
        n_jobs=cfg.jobs,
        df_rule=cfg.df_rule,
        opts=cfg.solver_options(),
        stage1_num=cfg.stage1_num,
        stage2_num=cfg.stage2_num,
        ratio=cfg.ratio,
        max_df=-1 if cfg.max_df is None else cfg.max_df,
        preprocess=preprocess,
    )
    wall = time.perf_counter() - t0
    payload = _envelope(cfg)
    # jobs only affects speed, so it stays out of the byte-reproducible report
    del payload["config"]["jobs"]
    payload["report"] = report.to_dict()
    payload["published"] = PUBLISHED_TABLE[cfg.example]
    _dump(payload, out / "report.json")
    (out / "table.txt").write_text(_table(report, spec), encoding="utf-8")
    _dump({"wall_time_s": wall, "jobs": cfg.jobs}, out / "timing.json")
    sys.stdout.write(_table(report, spec))
    if report.failures == cfg.reps:
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- data input


def _load(cfg: RunConfig, need_y: bool = True):
    if not cfg.data or not cfg.groups:
        raise UsageError("--data and --groups are required")
    try:
        design, y, header = read_grouped_csv(cfg.data, cfg.groups, cfg.response)
    except GroupMapMismatch as exc:
        raise UsageError(_group_map_diff(exc, cfg)) from exc
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if need_y and y is None:
        raise UsageError(f"response column {cfg.response!r} not found in {cfg.data}")
    return design, y, header


def _group_map_diff(exc: GroupMapMismatch, cfg: RunConfig) -> str:
    groups = read_group_map(cfg.groups)
    with open(cfg.data, newline="", encoding="utf-8") as fh:
        header = [h.strip() for h in next(csv.reader(fh))]
    header = [h for h in header if h != cfg.response]
    lines = [str(exc), "group map vs CSV columns:"]
    for k, name in enumerate(groups.names):
        sl = groups.slice(k)
        got = header[sl.start:sl.stop]
        mark = "" if len(got) == groups.sizes[k] else "  <-- short"
        lines.append(f"  {name} (size {groups.sizes[k]}): {got}{mark}")
    extra = header[groups.n_coef:]
    if extra:
        lines.append(f"  unassigned columns: {extra}")
    return "\n".join(lines)


def _prepare(cfg: RunConfig, design, y):
    """Optional standardization then optional within-group orthonormalization."""
    std = None
    factors = None
    if cfg.standardize:
        design, y, std = standardize(design, y)
    preprocess = cfg.preprocess or "none"
    if preprocess not in PREPROCESSING:
        raise UsageError(f"--preprocess must be one of {PREPROCESSING}")
    if preprocess == "orthonormalize":
        try:
            design, factors = orthonormalize_groups(design)
        except ValueError as exc:
            raise NumericalFailure(str(exc)) from exc
    return design, y, std, factors


def _to_original(beta: GroupedCoefficients, std, factors):
    if factors is not None:
        beta = map_back(beta, factors)
    intercept = 0.0
    if std is not None:
        beta, intercept = std.to_original(beta)
    return beta, intercept


def _fit_summary(res, beta_orig, intercept, names) -> dict:
    norms = beta_orig.norms()
    return {
        "lambda": res.lam,
        "selected_groups": [names[k] for k in sorted(res.active_set)],
        "selected_indices": sorted(res.active_set),
        "group_norms": {names[k]: float(norms[k]) for k in range(len(names))},
        "coefficients": {
            names[k]: beta_orig.block(k).tolist() for k in range(len(names))
        },
        "intercept": intercept,
        "objective": res.objective,
        "rss": res.rss,
        "kkt_residual": res.kkt_residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "stop_reason": res.stop_reason,
    }


# ---------------------------------------------------------------- fit


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.method not in ("group_lasso", "adaptive"):
        raise UsageError("--method must be group_lasso or adaptive")
    if cfg.df_rule not in DF_RULES:
        raise UsageError(f"--df-rule must be one of {DF_RULES}")
    lam = _parse_lambda(cfg.lam, "--lambda")
    lam_t = _parse_lambda(cfg.lambda_tilde, "--lambda-tilde")
    design0, y0, _ = _load(cfg)
    design, y, std, factors = _prepare(cfg, design0, y0)
    names = list(design.groups.names)
    opts = cfg.solver_options()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    payload = _envelope(cfg)
    payload["n"], payload["p"], payload["n_coef"] = design.n, design.p, design.groups.n_coef
    payload["standardization"] = None if std is None else std.to_dict()

    if lam is None:
        grid = lambda_grid(lambda_max(design, y), cfg.stage1_num, cfg.ratio)
        path1 = fit_path(design, y, grid, opts=opts, max_df=cfg.max_df)
        i1, bic1 = select_by_bic(path1, design, y, cfg.df_rule)
        stage1 = path1[i1]
        write_bic_csv(bic1, out / "bic_stage1.csv")
        payload["stage1_bic_index"] = i1
    else:
        stage1 = fit(design, y, PenaltyConfig(lam), opts)
    payload["lambda_max"] = lambda_max(design, y)
    b1, c1 = _to_original(stage1.beta, std, factors)
    payload["group_lasso"] = _fit_summary(stage1, b1, c1, names)
    failed = [] if stage1.converged else ["group_lasso"]

    if cfg.method == "adaptive":
        lams2 = None if lam_t is None else [lam_t]
        path2, w = adaptive_path(
            design, y, stage1.beta, lams2, opts, cfg.stage2_num, cfg.ratio, cfg.max_df
        )
        dropped = [names[k] for k in np.flatnonzero(np.isinf(w))]
        degenerate = len(dropped) == design.p
        if degenerate or lam_t is not None:
            final = path2[0]
        else:
            i2, bic2 = select_by_bic(path2, design, y, cfg.df_rule)
            final = path2[i2]
            write_bic_csv(bic2, out / "bic_stage2.csv")
            payload["stage2_bic_index"] = i2
        b2, c2 = _to_original(final.beta, std, factors)
        payload["adaptive"] = _fit_summary(final, b2, c2, names)
        payload["adaptive"]["weights"] = {names[k]: float(w[k]) for k in range(design.p)}
        payload["adaptive"]["dropped_groups"] = dropped
        payload["degenerate"] = degenerate
        if not final.converged:
            failed.append("adaptive")
    payload["wall_time_s"] = time.perf_counter() - t0
    payload["failed"] = failed
    _dump(payload, out / "fit.json")

    head = payload.get("adaptive", payload["group_lasso"])
    print(f"method: {cfg.method}   lambda: {head['lambda']:.6g}   "
          f"KKT residual: {head['kkt_residual']:.3g}")
    if payload.get("degenerate"):
        print("degenerate: stage one selected no group; adaptive fit is zero")
    print(f"{'group':<16}{'norm':>12}")
    for g, v in head["group_norms"].items():
        flag = " *" if g in head["selected_groups"] else ""
        print(f"{g:<16}{v:>12.5g}{flag}")
    if failed:
        print(f"solver did not converge: {failed}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- path


def cmd_path(cfg: RunConfig) -> int:
    if cfg.df_rule not in DF_RULES:
        raise UsageError(f"--df-rule must be one of {DF_RULES}")
    design0, y0, _ = _load(cfg)
    design, y, std, factors = _prepare(cfg, design0, y0)
    names = list(design.groups.names)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    lmax = lambda_max(design, y)
    grid = lambda_grid(lmax, cfg.stage1_num, cfg.ratio)
    t0 = time.perf_counter()
    path = fit_path(design, y, grid, opts=cfg.solver_options(), max_df=cfg.max_df)
    best, bic = select_by_bic(path, design, y, cfg.df_rule)
    write_bic_csv(bic, out / "path_bic.csv")
    points = []
    for res in path:
        b, c = _to_original(res.beta, std, factors)
        points.append({
            "lambda": res.lam,
            "active_groups": [names[k] for k in sorted(res.active_set)],
            "group_norms": b.norms().tolist(),
            "coefficients": b.values.tolist(),
            "intercept": c,
            "kkt_residual": res.kkt_residual,
            "converged": res.converged,
        })
    payload = _envelope(cfg)
    payload.update(
        lambda_max=lmax, bic_index=best, groups=names, path=points,
        wall_time_s=time.perf_counter() - t0,
    )
    _dump(payload, out / "path.json")
    print(f"{len(path)} fits, lambda_max={lmax:.6g}, BIC choice lambda={path[best].lam:.6g} "
          f"with groups {points[best]['active_groups']}")
    return EXIT_OK if all(r.converged for r in path) else EXIT_NUMERIC


# ---------------------------------------------------------------- diagnose


def _load_beta(path: str, design) -> GroupedCoefficients:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read beta file: {exc}") from exc
    vals = raw.get("beta") if isinstance(raw, dict) else raw
    if vals and isinstance(vals[0], list):
        vals = [v for block in vals for v in block]
    vals = np.asarray(vals, dtype=float)
    if vals.shape != (design.groups.n_coef,):
        raise UsageError(
            f"beta has {vals.size} entries, design has {design.groups.n_coef} coefficients"
        )
    return GroupedCoefficients(vals, design.groups)


def _default_q_star(design, q: int) -> int:
    if design.groups.n_coef <= design.n:
        return design.p
    return max(1, min(design.p, design.n // (2 * design.groups.d_max), 2 * q + 1))


def cmd_diagnose(cfg: RunConfig) -> int:
    if not cfg.beta:
        raise UsageError("--beta is required")
    design, y, _ = _load(cfg)
    beta = _load_beta(cfg.beta, design)
    p = design.p
    if cfg.a0 is None:
        A0 = [k for k in range(p) if not np.any(beta.block(k))]
    else:
        A0 = list(cfg.a0)
        bad = [k for k in A0 if not 0 <= k < p]
        if bad:
            raise UsageError(f"--a0 indices out of range 0..{p - 1}: {bad}")
    prof = sparsity_profile(beta, A0)
    q_star = cfg.q_star or _default_q_star(design, prof.q)
    if not 1 <= q_star <= p:
        raise UsageError(f"--q-star must be in 1..{p}")
    try:
        src = verify_src(design, q_star, cfg.src_mode, cfg.src_samples, cfg.seed)
    except ValueError as exc:
        raise NumericalFailure(str(exc)) from exc
    if not src.satisfied:
        raise NumericalFailure(
            f"SRC fails at q*={q_star}: smallest eigenvalue {src.c_lower:.3g}; "
            "try a smaller --q-star"
        )
    e2_mode = "exhaustive"
    try:
        e2 = eta2(design, beta, prof.A0, "exhaustive")
    except ValueError:
        e2_mode = "sampled"
        e2 = eta2(design, beta, prof.A0, "sampled", cfg.src_samples, cfg.seed)

    sigma_estimated = cfg.sigma is None
    if sigma_estimated:
        grid = lambda_grid(lambda_max(design, y), cfg.stage1_num, cfg.ratio)
        path = fit_path(design, y, grid, opts=cfg.solver_options(), max_df=cfg.max_df)
        i, _ = select_by_bic(path, design, y, cfg.df_rule)
        dof = max(1, design.n - path[i].df())
        sigma = math.sqrt(path[i].rss / dof)
    else:
        sigma = cfg.sigma

    lam_user = None if cfg.lam in ("auto", "np") else _parse_lambda(cfg.lam, "--lambda")
    probe = eval_bounds(prof, src, design.n, sigma, 1.0, cfg.c0, cfg.a_n, e2)
    lam = probe.lambda_np if lam_user is None else lam_user
    if not lam > 0:
        raise UsageError("--lambda must be positive for diagnostics")
    bounds = eval_bounds(prof, src, design.n, sigma, lam, cfg.c0, cfg.a_n, e2)
    res = fit(design, y, PenaltyConfig(lam), cfg.solver_options())
    diag = selection_diagnostics(design, beta, res.beta, prof.A0)
    th1 = check_theorem1(bounds, diag, prof, beta)
    th2 = check_theorem2_4(bounds, beta, res.beta, design) if prof.q >= 1 else None
    lam_t = _parse_lambda(cfg.lambda_tilde, "--lambda-tilde")
    r_n = cfg.r_n or math.sqrt(design.n / (max(prof.q, 1) * math.log(design.groups.n_coef)))
    cond = (
        check_conditions_c(prof, design, design.n, lam_t or lam, r_n)
        if prof.q >= 1 else None
    )

    payload = _envelope(cfg)
    payload.update(
        profile={
            "A0": sorted(prof.A0), "q": prof.q, "eta1": prof.eta1, "is_nsc": prof.is_nsc,
            "theta_a": prof.theta_a, "theta_b": prof.theta_b,
            "d_a": prof.d_a, "d_b": prof.d_b, "d": prof.d, "N_d": prof.N_d, "p": prof.p,
        },
        src={
            "q_star": src.q_star, "c_lower": src.c_lower, "c_upper": src.c_upper,
            "c_bar": src.c_bar, "exhaustive": src.exhaustive,
            "subsets_checked": src.subsets_checked, "certifying": src.certifying,
        },
        eta2={"value": e2, "mode": e2_mode},
        sigma={"value": sigma, "estimated": sigma_estimated},
        bounds=bounds.to_dict(),
        fit={
            "lambda": res.lam, "selected": sorted(res.active_set),
            "kkt_residual": res.kkt_residual, "converged": res.converged,
        },
        diagnostics={
            "q_hat": diag.q_hat, "selected": sorted(diag.selected),
            "omega_tilde": diag.omega_tilde, "zeta2": diag.zeta2,
            "projected_norm": diag.projected_norm, "mean_norm": diag.mean_norm,
        },
        theorem1=th1.to_dict(),
        theorem2=th2,
        conditions=cond,
    )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(payload, out / "diagnose.json")
    lines = [
        f"groups p={prof.p}, important q={prof.q}, NSC={prof.is_nsc}, eta1={prof.eta1:.4g}, "
        f"eta2={e2:.4g}",
        f"SRC q*={src.q_star}: c_*={src.c_lower:.4g}, c^*={src.c_upper:.4g}, "
        f"c_bar={src.c_bar:.4g} ({'exhaustive' if src.exhaustive else 'sampled'})",
        f"sigma={sigma:.4g}{' (estimated)' if sigma_estimated else ''}, lambda={lam:.6g}, "
        f"lambda_np={bounds.lambda_np:.6g}, lambda_0={bounds.lambda_0:.6g}",
        f"M1={bounds.M1:.4g}  M2={bounds.M2:.4g}  M3={bounds.M3:.4g}  B1={bounds.B1:.4g}",
        f"q_hat={diag.q_hat}, omega={diag.omega_tilde:.4g}, zeta2={diag.zeta2:.4g}",
    ]
    for name, (lhs, rhs, ok) in th1.checks.items():
        lines.append(f"  [{'ok' if ok else 'FAIL'}] {name}: {lhs:.4g} vs {rhs:.4g}")
    lines += [f"  note: {n}" for n in th1.notes]
    text = "\n".join(lines) + "\n"
    (out / "diagnose.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

# defaults that differ from the RunConfig field defaults
COMMAND_DEFAULTS = {"fit": {"method": "group_lasso"}, "diagnose": {"lam": "np"}}

COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "path": cmd_path, "diagnose": cmd_diagnose}


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    # every option defaults to None (SUPPRESS) so that config values survive
    # unless a flag is given explicitly
    S = argparse.SUPPRESS
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=S, help="JSON file with RunConfig fields")
    common.add_argument("--seed", type=int, default=S)
    common.add_argument("--out", default=S, help="output directory")
    common.add_argument("--kkt-tol", dest="kkt_tol", type=float, default=S)
    common.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    common.add_argument("--df-rule", dest="df_rule", choices=DF_RULES, default=S)
    common.add_argument("--num", dest="stage1_num", type=int, default=S,
                        help="stage-one grid size")
    common.add_argument("--num2", dest="stage2_num", type=int, default=S,
                        help="stage-two grid size")
    common.add_argument("--ratio", type=float, default=S, help="lambda_min / lambda_max")
    common.add_argument("--max-df", dest="max_df", type=int, default=S,
                        help="stop a path once this many coefficients are active")
    common.add_argument("--preprocess", choices=PREPROCESSING, default=S)
    common.add_argument("-v", "--verbose", action="store_true", default=S)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", default=S, help="CSV with a header row")
    data.add_argument("--groups", default=S, help="group map JSON")
    data.add_argument("--response", default=S, help="response column name (default y)")
    data.add_argument("--standardize", action="store_true", default=S)

    parser = argparse.ArgumentParser(prog="grouplasso", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"grouplasso {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="benchmark examples")
    sim.add_argument("--example", type=int, default=S)
    sim.add_argument("--reps", type=int, default=S)
    sim.add_argument("--method", choices=("group_lasso", "both"), default=S)
    sim.add_argument("--jobs", type=int, default=S)

    f = sub.add_parser("fit", parents=[common, data], help="fit a CSV data set")
    f.add_argument("--method", choices=("group_lasso", "adaptive"), default=S)
    f.add_argument("--lambda", dest="lam", default=S, help="number or 'auto' (BIC)")
    f.add_argument("--lambda-tilde", dest="lambda_tilde", default=S,
                   help="stage-two level, number or 'auto' (BIC)")

    sub.add_parser("path", parents=[common, data], help="penalty path and BIC table")

    d = sub.add_parser("diagnose", parents=[common, data], help="theory diagnostics")
    d.add_argument("--beta", default=S, help="JSON with the true coefficients")
    d.add_argument("--a0", type=_int_list, default=S, help="0-based indices of small groups")
    d.add_argument("--sigma", type=float, default=S)
    d.add_argument("--lambda", dest="lam", default=S, help="number or 'np' (lambda_np)")
    d.add_argument("--lambda-tilde", dest="lambda_tilde", default=S)
    d.add_argument("--r-n", dest="r_n", type=float, default=S)
    d.add_argument("--q-star", dest="q_star", type=int, default=S)
    d.add_argument("--src-mode", dest="src_mode", choices=("exhaustive", "sampled"), default=S)
    d.add_argument("--src-samples", dest="src_samples", type=int, default=S)
    d.add_argument("--c0", type=float, default=S)
    d.add_argument("--a-n", dest="a_n", type=float, default=S)
    return parser


def resolve_config(args: argparse.Namespace) -> tuple[RunConfig, bool]:
    """Merge dataclass defaults < config file < explicit flags."""
    given = vars(args).copy()
    verbose = bool(given.pop("verbose", False))
    merged: dict[str, Any] = {}
    path = given.pop("config", None)
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
            merged.update(json.loads(text))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
    merged.update(given)
    for key, value in COMMAND_DEFAULTS.get(merged.get("command"), {}).items():
        merged.setdefault(key, value)
    return RunConfig.from_dict(merged), verbose


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg, verbose = resolve_config(args)
        logging.basicConfig(level=logging.INFO if verbose else logging.WARNING)
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def schema_path() -> Path:
    """Location of the JSON schema for ``diagnose`` reports."""
    return Path(str(resources.files("grouplasso") / "schemas" / "diagnose.schema.json"))


if __name__ == "__main__":
    sys.exit(main())

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest

from grouplasso.cli import RunConfig, main, schema_path
from grouplasso.simulation import ExampleSpec, example_spec, generate


def run(*args):
    return main([str(a) for a in args])


def _load(path):
    return json.loads(Path(path).read_text())


def _write_dataset(tmp_path, X, y, sizes, name="d"):
    cols = [f"x{j}" for j in range(X.shape[1])]
    with open(tmp_path / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["y"])
        for i in range(X.shape[0]):
            w.writerow([repr(float(v)) for v in X[i]] + [repr(float(y[i]))])
    groups = {"groups": [{"name": f"g{k}", "size": int(s)} for k, s in enumerate(sizes)]}
    (tmp_path / f"{name}.json").write_text(json.dumps(groups))
    return tmp_path / f"{name}.csv", tmp_path / f"{name}.json"


def test_fixture_is_generator_output(tiny_paths):
    spec = ExampleSpec(0, (3, 2, 3), (1.5, -1.0, 0.5, 0.0, 0.0, 1.0, 1.0, 1.0), n=30, sigma=1.0)
    D, y, b = generate(spec, seed=2024)
    data = np.loadtxt(tiny_paths["data"], delimiter=",", skiprows=1)
    assert data.shape == (30, 9)
    assert np.array_equal(data[:, :8], D.matrix) and np.array_equal(data[:, 8], y)
    assert _load(tiny_paths["beta"])["beta"] == [list(b.block(k)) for k in range(3)]


def test_fit_auto_bic(tiny_paths, tmp_path):
    assert run("fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--out", tmp_path) == 0
    rep = _load(tmp_path / "fit.json")
    assert rep["group_lasso"]["kkt_residual"] <= 1e-6
    assert rep["group_lasso"]["converged"]
    assert set(rep["group_lasso"]["coefficients"]) == {"a", "b", "c"}
    assert rep["version"] and rep["seed"] == 0 and rep["config"]["command"] == "fit"
    assert "wall_time_s" in rep
    rows = list(csv.DictReader(open(tmp_path / "bic_stage1.csv")))
    assert len(rows) == 100 and rows[0]["active_groups"] == "0"


def test_fit_above_lambda_max(tiny_paths, tmp_path):
    assert run("fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"],
               "--lambda", "1e6", "--out", tmp_path) == 0
    rep = _load(tmp_path / "fit.json")
    assert rep["group_lasso"]["selected_groups"] == []


def test_fit_adaptive_and_degenerate(tiny_paths, tmp_path):
    base = ["fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--method", "adaptive"]
    assert run(*base, "--out", tmp_path / "a") == 0
    rep = _load(tmp_path / "a" / "fit.json")
    assert rep["degenerate"] is False
    assert set(rep["adaptive"]["selected_groups"]) <= set(rep["group_lasso"]["selected_groups"])
    assert run(*base, "--lambda", "1e6", "--out", tmp_path / "b") == 0
    rep = _load(tmp_path / "b" / "fit.json")
    assert rep["degenerate"] is True and rep["adaptive"]["selected_groups"] == []


def test_fit_standardize_and_orthonormalize(tiny_paths, tmp_path):
    assert run("fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--standardize",
               "--preprocess", "orthonormalize", "--out", tmp_path) == 0
    rep = _load(tmp_path / "fit.json")
    assert rep["standardization"] is not None and isinstance(rep["group_lasso"]["intercept"], float)


def test_fit_group_map_mismatch(tiny_paths, tmp_path, capsys):
    (tmp_path / "g.json").write_text(json.dumps({"groups": [{"name": "a", "size": 3}, {"name": "b", "size": 2}]}))
    assert run("fit", "--data", tiny_paths["data"], "--groups", tmp_path / "g.json", "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert "group map vs CSV columns" in err and "unassigned columns" in err


def test_fit_nonconvergence_exit_code(tiny_paths, tmp_path):
    code = run("fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--lambda", "0.01",
               "--max-iters", "1", "--kkt-tol", "1e-14", "--out", tmp_path)
    assert code == 3
    assert _load(tmp_path / "fit.json")["failed"] == ["group_lasso"]


def test_usage_errors(tiny_paths, tmp_path):
    assert run("simulate", "--example", "9", "--out", tmp_path) == 2
    assert run("simulate", "--reps", "0", "--out", tmp_path) == 2
    assert run("fit", "--out", tmp_path) == 2
    assert run("fit", "--data", tmp_path / "missing.csv", "--groups", tiny_paths["groups"]) == 2
    assert run("fit", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--lambda", "abc") == 2
    assert run("bogus") == 2
    assert run("simulate", "--nonsense") == 2


def test_path_command(tiny_paths, tmp_path):
    assert run("path", "--data", tiny_paths["data"], "--groups", tiny_paths["groups"], "--num", "20",
               "--out", tmp_path) == 0
    rep = _load(tmp_path / "path.json")
    assert len(rep["path"]) == 20 and rep["path"][0]["active_groups"] == []
    assert (tmp_path / "path_bic.csv").exists()


def test_simulate_determinism_and_layout(tmp_path, capsys):
    args = ["simulate", "--example", "1", "--reps", "3", "--seed", "7"]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b", "--jobs", "2") == 0
    a = (tmp_path / "a" / "report.json").read_bytes()
    b = (tmp_path / "b" / "report.json").read_bytes()
    # output directory is part of the config echo; everything else must match
    ja, jb = json.loads(a), json.loads(b)
    ja["config"].pop("out"), jb["config"].pop("out")
    assert ja == jb
    assert run(*args, "--out", tmp_path / "a") == 0
    assert (tmp_path / "a" / "report.json").read_bytes() == a
    table = (tmp_path / "a" / "table.txt").read_text()
    for col in ("mean", "med", "ME", "%incl", "%sel", "group lasso", "adaptive"):
        assert col in table
    assert len(ja["report"]["records"]) == 3 and ja["seed"] == 7
    assert "wall_time_s" in _load(tmp_path / "a" / "timing.json")


def test_config_file_and_flag_precedence(tmp_path, tiny_paths):
    cfg = {"command": "fit", "data": tiny_paths["data"], "groups": tiny_paths["groups"],
           "lam": "1e6", "out": str(tmp_path / "cfg")}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("fit", "--config", tmp_path / "c.json") == 0
    assert _load(tmp_path / "cfg" / "fit.json")["group_lasso"]["selected_groups"] == []
    assert run("fit", "--config", tmp_path / "c.json", "--lambda", "auto", "--out", tmp_path / "flag") == 0
    rep = _load(tmp_path / "flag" / "fit.json")
    assert rep["group_lasso"]["selected_groups"] and rep["config"]["lam"] == "auto"
    (tmp_path / "bad.json").write_text(json.dumps({"nope": 1}))
    assert run("fit", "--config", tmp_path / "bad.json") == 2


def test_run_config_roundtrip():
    cfg = RunConfig(command="diagnose", a0=[1, 2], sigma=2.5, q_star=3, lam="np", standardize=True)
    assert RunConfig.from_json(cfg.to_json()) == cfg
    assert RunConfig.from_dict(RunConfig().to_dict()) == RunConfig()


def test_diagnose_schema_and_example1(tmp_path):
    spec = example_spec(1)
    D, y, b = generate(spec, seed=0)
    data, groups = _write_dataset(tmp_path, D.matrix, y, spec.sizes)
    (tmp_path / "beta.json").write_text(json.dumps({"beta": b.values.tolist()}))
    assert run("diagnose", "--data", data, "--groups", groups, "--beta", tmp_path / "beta.json",
               "--sigma", "3", "--out", tmp_path / "o") == 0
    rep = _load(tmp_path / "o" / "diagnose.json")
    jsonschema.validate(rep, json.loads(schema_path().read_text()))
    assert rep["profile"]["is_nsc"] and rep["eta2"]["value"] == 0
    assert rep["profile"]["A0"] == list(range(2, 10))
    assert rep["src"]["exhaustive"] and rep["bounds"]["lambda_0"] is None  # infinite
    assert (tmp_path / "o" / "diagnose.txt").exists()


def test_diagnose_orthonormal_fixture(tmp_path):
    rng = np.random.default_rng(0)
    Q, _ = np.linalg.qr(rng.standard_normal((40, 6)))
    X = Q * np.sqrt(40)
    beta = np.array([1.0, 1.0, 0, 0, 0, 0])
    y = X @ beta + 0.5 * rng.standard_normal(40)
    data, groups = _write_dataset(tmp_path, X, y, (2, 2, 2))
    (tmp_path / "beta.json").write_text(json.dumps({"beta": [[1, 1], [0, 0], [0, 0]]}))
    assert run("diagnose", "--data", data, "--groups", groups, "--beta", tmp_path / "beta.json",
               "--lambda", "5", "--out", tmp_path / "o") == 0
    rep = _load(tmp_path / "o" / "diagnose.json")
    assert rep["src"]["c_bar"] == pytest.approx(1.0)
    assert rep["sigma"]["estimated"] is True
    jsonschema.validate(rep, json.loads(schema_path().read_text()))


def test_diagnose_src_cap_exit_code(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 30))
    data, groups = _write_dataset(tmp_path, X, X[:, 0], (1,) * 30)
    (tmp_path / "beta.json").write_text(json.dumps({"beta": [1.0] + [0.0] * 29}))
    code = run("diagnose", "--data", data, "--groups", groups, "--beta", tmp_path / "beta.json",
               "--sigma", "1", "--q-star", "15", "--out", tmp_path / "o")
    assert code == 3
    code = run("diagnose", "--data", data, "--groups", groups, "--beta", tmp_path / "beta.json",
               "--sigma", "1", "--q-star", "15", "--src-mode", "sampled", "--src-samples", "30",
               "--out", tmp_path / "o")
    assert code == 0
    assert _load(tmp_path / "o" / "diagnose.json")["src"]["certifying"] is False

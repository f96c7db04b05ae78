import json
from pathlib import Path

import jsonschema
import pytest
import yaml

from evomin.cli import ConfigError, RunConfig, main

SCHEMA_DIR = Path(__file__).resolve().parents[1] / "src" / "evomin" / "schemas"


def schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())


def write_config(tmp_path, **overrides):
    cfg = {
        "problem": {"kind": "heat"},
        "grid": {"n": 12},
        "time": {"t0": 0.0, "t1": 0.1, "steps": 15},
        "solver": {"method": "ben", "j_tol": 1e-10},
        "output": {"directory": str(tmp_path / "out")},
        "seed": 0,
    }
    for key, val in overrides.items():
        if isinstance(val, dict) and key in cfg:
            cfg[key].update(val)
        else:
            cfg[key] = val
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_solve_heat_writes_artifacts(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["solve", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    for name in ("trajectory.csv", "convergence.csv", "breakdown.csv", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    jsonschema.validate(summary, schema("summary"))
    assert summary["J_final"] < 1e-10
    assert summary["status"] == "converged-zero-energy"
    assert summary["runtime_ms"] is None
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t," + ",".join(f"x_{i}" for i in range(12))


def test_solve_euler_method(tmp_path):
    cfg = write_config(tmp_path, solver={"method": "euler"})
    assert main(["solve", "--config", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    jsonschema.validate(summary, schema("summary"))
    assert summary["J_final"] < 1e-12
    assert summary["max_residual"] < 1e-9


def test_solve_continuation_method(tmp_path):
    cfg = write_config(
        tmp_path,
        problem={"kind": "heat_core"},
        solver={"method": "continuation",
                "eps_schedule": {"start": 1.0, "factor": 0.25, "levels": 8}},
    )
    assert main(["solve", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    assert (out / "continuation.csv").exists()
    lines = (out / "continuation.csv").read_text().splitlines()
    assert lines[0] == "eps,distance_to_prev,final_J,newton_iters_total"
    assert len(lines) == 9


def test_malformed_config_exits_one(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("problem: [not, a, mapping\n")
    assert main(["solve", "--config", str(bad)]) == 1
    missing = tmp_path / "nope.yaml"
    assert main(["solve", "--config", str(missing)]) == 1
    wrong = write_config(tmp_path, problem={"kind": "unknown_kind"})
    assert main(["solve", "--config", str(wrong)]) == 1


def test_iteration_cap_exits_two(tmp_path):
    cfg = write_config(tmp_path, solver={"method": "ben", "max_iterations": 1,
                                         "j_tol": 1e-16})
    assert main(["solve", "--config", str(cfg)]) == 2
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["status"] == "iteration-cap"


def test_compare_pass(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["compare", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "compare.json").read_text())
    jsonschema.validate(report, schema("compare"))
    assert report["pass"]


def test_compare_grid_mismatch_exits_one(tmp_path):
    cfg = write_config(tmp_path, compare={"oracle_steps": 30})
    assert main(["compare", "--config", str(cfg)]) == 1


def test_compare_perturbation_designed_failure(tmp_path):
    cfg = write_config(tmp_path, compare={"perturb": 1e-2})
    assert main(["compare", "--config", str(cfg)]) == 2
    report = json.loads((tmp_path / "out" / "compare.json").read_text())
    assert not report["pass"]
    assert report["oracle"]["J"] > 1e-8


def test_check_heat_clean(tmp_path):
    cfg = write_config(tmp_path, checks={"samples": 200})
    assert main(["check", "--config", str(cfg)]) == 0
    report = json.loads((tmp_path / "out" / "check.json").read_text())
    jsonschema.validate(report, schema("check"))
    assert report["pass"]
    assert {r["name"] for r in report["reports"]} == {"growth", "monotonicity", "coercivity"}


def test_check_anticoercive_fixture_fails(tmp_path):
    cfg = write_config(tmp_path, problem={"kind": "anticoercive_fixture"},
                       checks={"samples": 400, "run": ["coercivity"]},
                       time={"t0": 0.0, "t1": 1.0, "steps": 2})
    assert main(["check", "--config", str(cfg)]) == 2


def test_check_zero_samples_pass(tmp_path):
    cfg = write_config(tmp_path, checks={"samples": 0})
    assert main(["check", "--config", str(cfg)]) == 0


def test_convergence_single_level(tmp_path):
    cfg = write_config(tmp_path, solver={"method": "euler"})
    assert main(["convergence", "--config", str(cfg), "--refinements", "0"]) == 0
    report = json.loads((tmp_path / "out" / "convergence.json").read_text())
    jsonschema.validate(report, schema("convergence"))
    assert len(report["levels"]) == 1
    assert report["defect_orders"] == []
    csv_lines = (tmp_path / "out" / "convergence_study.csv").read_text().splitlines()
    assert len(csv_lines) == 2


def test_convergence_ns_energy_defect_halves(tmp_path):
    cfg = write_config(tmp_path, problem={"kind": "navier_stokes", "initial": "random"},
                       grid={"k": 8}, time={"t0": 0.0, "t1": 0.5, "steps": 5},
                       solver={"method": "euler"}, seed=2)
    assert main(["convergence", "--config", str(cfg), "--refinements", "2"]) == 0
    report = json.loads((tmp_path / "out" / "convergence.json").read_text())
    for order in report["defect_orders"]:
        assert 0.7 <= order <= 1.3


def test_convergence_heat_first_order(tmp_path):
    cfg = write_config(tmp_path, grid={"n": 64},
                       time={"t0": 0.0, "t1": 0.1, "steps": 25},
                       solver={"method": "euler"})
    assert main(["convergence", "--config", str(cfg), "--refinements", "2"]) == 0
    report = json.loads((tmp_path / "out" / "convergence.json").read_text())
    for order in report["error_orders"]:
        assert 0.77 <= order <= 1.2   # ratio in [1.7, 2.3]


def test_reproducibility_byte_identical(tmp_path):
    cfg = write_config(tmp_path)
    out1 = tmp_path / "r1"
    out2 = tmp_path / "r2"
    assert main(["solve", "--config", str(cfg), "--out", str(out1), "--seed", "3"]) == 0
    assert main(["solve", "--config", str(cfg), "--out", str(out2), "--seed", "3"]) == 0
    for name in ("trajectory.csv", "convergence.csv", "breakdown.csv", "summary.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_out_env_override(tmp_path, monkeypatch):
    cfg = write_config(tmp_path)
    target = tmp_path / "env_out"
    monkeypatch.setenv("EVOMIN_OUT", str(target))
    assert main(["solve", "--config", str(cfg)]) == 0
    assert (target / "summary.json").exists()


def test_runconfig_validation():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": {"kind": "heat"}, "time": {"steps": 0}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": {"kind": "heat"}, "nonsense": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"problem": {"kind": "heat"},
                             "time": {"steps": 5},
                             "solver": {"method": "zigzag"}})


@pytest.mark.parametrize("problem,grid,time_cfg", [
    ({"kind": "parabolic_divergence", "q": 2.0, "reaction": -0.5, "flux": 0.2,
      "gamma": 0.3}, {"n": 8}, {"t1": 0.1, "steps": 5}),
    ({"kind": "parabolic_nondivergence", "gamma": 0.3}, {"n": 8}, {"t1": 0.1, "steps": 5}),
    ({"kind": "hyperbolic", "damping": 0.2, "nonlinearity": 0.1}, {"n": 8},
     {"t1": 0.5, "steps": 5}),
    ({"kind": "schrodinger", "couplings": [0.2, 0.1]}, {"n": 8}, {"t1": 0.5, "steps": 5}),
    ({"kind": "navier_stokes", "viscosity": 0.1, "initial": "random"}, {"k": 8},
     {"t1": 0.2, "steps": 3}),
    ({"kind": "scalar_decay"}, {}, {"t1": 1.0, "steps": 4}),
])
def test_solve_euler_all_kinds(tmp_path, problem, grid, time_cfg):
    cfg = write_config(tmp_path, problem=problem, grid=grid,
                       time={"t0": 0.0, **time_cfg}, solver={"method": "euler"})
    assert main(["solve", "--config", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["max_residual"] < 1e-6


def test_timing_flag_fills_runtime(tmp_path):
    cfg = write_config(tmp_path, output={"directory": str(tmp_path / "out"),
                                         "timing": True})
    assert main(["solve", "--config", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["runtime_ms"] > 0

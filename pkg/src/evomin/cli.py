"""Batch front door: config parsing, run orchestration, artifact emission.

Configs are YAML files with sections problem / grid / time / solver /
checks / output plus a seed; see docs in the README and the JSON schemas
under evomin/schemas for the emitted artifacts.  With timing disabled
(the default) a fixed config and seed reproduce every output file byte
for byte.

Exit codes: 0 converged / all checks clean, 2 non-convergence or check
violations, 1 configuration errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import applications as apps
from .continuation import continuation_solve, continuation_to_csv, default_schedule
from .energy import breakdown_to_csv, energy_balance_audit, energy_breakdown
from .minimize import MinimizeOptions, minimize, trace_to_csv, verify_equivalence
from .operator import check_coercivity, check_monotonicity
from .oracle import StepFailure, implicit_euler_solve
from .potential import Potential, check_growth
from .trajectory import residual, trajectory_to_csv

PROBLEM_KINDS = (
    "heat", "parabolic_divergence", "parabolic_nondivergence", "hyperbolic",
    "schrodinger", "navier_stokes", "scalar_decay", "anticoercive_fixture",
    "heat_core",
)


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    problem: dict = field(default_factory=lambda: {"kind": "heat"})
    grid: dict = field(default_factory=lambda: {"n": 32})
    time: dict = field(default_factory=lambda: {"t0": 0.0, "t1": 0.1, "steps": 50})
    solver: dict = field(default_factory=lambda: {"method": "ben"})
    checks: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    compare: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping of sections")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cfg = cls()
        known = {"problem", "grid", "time", "solver", "checks", "output", "compare", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for key in known:
            if key in raw and raw[key] is not None:
                setattr(cfg, key, raw[key])
        cfg.validate()
        return cfg

    def validate(self) -> None:
        kind = self.problem.get("kind")
        if kind not in PROBLEM_KINDS:
            raise ConfigError(f"problem.kind must be one of {PROBLEM_KINDS}, got {kind!r}")
        steps = self.time.get("steps")
        if not isinstance(steps, int) or steps < 1:
            raise ConfigError("time.steps must be an integer >= 1")
        method = self.solver.get("method", "ben")
        if method not in ("ben", "euler", "continuation"):
            raise ConfigError(f"solver.method must be ben|euler|continuation, got {method!r}")
        for key in ("j_tol", "g_tol", "newton_tol"):
            if key in self.solver and not (float(self.solver[key]) > 0):
                raise ConfigError(f"solver.{key} must be positive")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")

    @property
    def steps(self) -> int:
        return int(self.time["steps"])

    @property
    def t1(self) -> float:
        return float(self.time.get("t1", 0.1))

    def out_dir(self, override: str | None = None) -> Path:
        env = os.environ.get("EVOMIN_OUT")
        directory = override or env or self.output.get("directory", "out")
        return Path(directory)

    @property
    def workers(self) -> int:
        env = os.environ.get("EVOMIN_WORKERS")
        if env is not None:
            return max(1, int(env))
        return max(1, int(self.output.get("workers", 1)))


def build_problem(cfg: RunConfig):
    """Instantiate the configured ProblemSpec."""
    kind = cfg.problem["kind"]
    n = int(cfg.grid.get("n", 32))
    k = int(cfg.grid.get("k", 16))
    t1 = cfg.t1
    p = cfg.problem
    if kind == "heat":
        return apps.build_heat(n, t1=t1)
    if kind == "heat_core":
        return apps.build_heat_core(n, t1=t1)
    if kind == "parabolic_divergence":
        theta = apps.PointwiseMap.linear(float(p["reaction"])) if "reaction" in p else None
        xi = apps.PointwiseMap.saturated_cubic(float(p["flux"])) if "flux" in p else None
        gamma = apps.PointwiseMap.arctan(float(p["gamma"])) if "gamma" in p else None
        return apps.build_parabolic_divergence(
            n, q=float(p.get("q", 2.0)), theta=theta, xi=xi, gamma=gamma, t1=t1)
    if kind == "parabolic_nondivergence":
        gamma = apps.PointwiseMap.arctan(float(p["gamma"])) if "gamma" in p else None
        return apps.build_parabolic_nondivergence(n, q=float(p.get("q", 2.0)),
                                                  gamma=gamma, t1=t1)
    if kind == "hyperbolic":
        return apps.build_hyperbolic(n, damping=float(p.get("damping", 0.0)),
                                     nonlinearity=float(p.get("nonlinearity", 0.0)), t1=t1)
    if kind == "schrodinger":
        c = p.get("couplings", [0.0, 0.0])
        return apps.build_schrodinger(n, couplings=(float(c[0]), float(c[1])), t1=t1)
    if kind == "navier_stokes":
        return apps.build_navier_stokes_2d(
            k, viscosity=float(p.get("viscosity", 0.1)),
            initial=p.get("initial", "taylor-green"), t1=t1, seed=cfg.seed)
    if kind == "scalar_decay":
        return apps.build_scalar_decay(t1=float(cfg.time.get("t1", 1.0)))
    if kind == "anticoercive_fixture":
        return apps.build_anticoercive_fixture(t1=float(cfg.time.get("t1", 1.0)))
    raise ConfigError(f"unhandled problem kind {kind!r}")


def _eps_schedule(cfg: RunConfig) -> list[float]:
    spec = cfg.solver.get("eps_schedule")
    if spec is None:
        return default_schedule()
    if isinstance(spec, list):
        return [float(e) for e in spec]
    return default_schedule(start=float(spec.get("start", 1.0)),
                            factor=float(spec.get("factor", 0.5)),
                            levels=int(spec.get("levels", 12)))


def _json_dump(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sanitize_metadata(meta: dict) -> dict:
    return {k: v for k, v in meta.items()
            if not k.startswith("_") and isinstance(v, (str, int, float, bool))}


def cmd_solve(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    method = cfg.solver.get("method", "ben")
    newton_tol = float(cfg.solver.get("newton_tol", 1e-12))
    t_start = time.perf_counter()
    status = "completed"
    iterations = 0
    trace_csv = "iter,J,grad_norm,step_size\n"
    cont_csv = None

    if method == "ben":
        opts = MinimizeOptions(
            j_tol=float(cfg.solver.get("j_tol", 1e-10)),
            g_tol=float(cfg.solver.get("g_tol", 1e-9)),
            max_iterations=int(cfg.solver.get("max_iterations", 100_000)),
        )
        res = minimize(problem, steps=cfg.steps, opts=opts)
        traj = res.trajectory
        status = res.status
        iterations = res.iterations
        trace_csv = trace_to_csv(res)
        ok = res.status == "converged-zero-energy"
    elif method == "euler":
        try:
            counter: dict = {}
            traj = implicit_euler_solve(problem, cfg.steps, newton_tol=newton_tol,
                                        counter=counter)
            iterations = counter.get("newton_iters", 0)
            ok = True
        except StepFailure as exc:
            print(f"solve failed: {exc}", file=sys.stderr)
            return 2
    else:  # continuation
        if problem.lambda_flag != 0:
            raise ConfigError(
                "solver.method continuation needs a potential-free core problem "
                "(problem.kind heat_core)")
        reg = Potential.quadratic(problem.triple.mass)
        res = continuation_solve(problem, reg, _eps_schedule(cfg), cfg.steps,
                                 newton_tol=newton_tol)
        cont_csv = continuation_to_csv(res)
        if not res.completed:
            (out_dir / "continuation.csv").write_text(cont_csv, encoding="utf-8")
            print(f"solve failed: {res.status}", file=sys.stderr)
            return 2
        traj = res.trajectories[-1]
        iterations = int(sum(res.newton_iters))
        problem = problem.with_potential(reg.scaled(res.eps[-1]), lambda_flag=1)
        status = "completed"
        ok = True

    runtime_ms = 1e3 * (time.perf_counter() - t_start)
    bd = energy_breakdown(problem, traj)
    res_max = float(np.max(np.abs(residual(problem, traj))))
    audit = energy_balance_audit(problem, traj)
    summary = {
        "problem": problem.name,
        "method": method,
        "J_final": bd.total,
        "max_residual": res_max,
        "iterations": iterations,
        "energy_balance_max": float(np.max(np.abs(audit))),
        "runtime_ms": runtime_ms if cfg.output.get("timing", False) else None,
        "status": status,
        "seed": cfg.seed,
        "steps": traj.steps,
        "grid": problem.metadata.get("grid", ""),
        "metadata": _sanitize_metadata(problem.metadata),
    }
    formats = cfg.output.get("formats", ["csv", "json"])
    if "csv" in formats:
        (out_dir / "trajectory.csv").write_text(trajectory_to_csv(traj), encoding="utf-8")
        (out_dir / "convergence.csv").write_text(trace_csv, encoding="utf-8")
        (out_dir / "breakdown.csv").write_text(breakdown_to_csv(bd), encoding="utf-8")
        if cont_csv is not None:
            (out_dir / "continuation.csv").write_text(cont_csv, encoding="utf-8")
    if "json" in formats:
        _json_dump(out_dir / "summary.json", summary)
    return 0 if ok else 2


def cmd_compare(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    # the verification wants zero energy and a zero gradient at once, so the
    # minimizer must certify both before stopping
    opts = MinimizeOptions(
        j_tol=float(cfg.solver.get("j_tol", 1e-10)),
        g_tol=float(cfg.solver.get("g_tol", 1e-9)),
        max_iterations=int(cfg.solver.get("max_iterations", 100_000)),
        require_gradient=True,
    )
    res = minimize(problem, steps=cfg.steps, opts=opts)
    oracle_steps = int(cfg.compare.get("oracle_steps", cfg.steps))
    oracle = implicit_euler_solve(problem, oracle_steps,
                                  newton_tol=float(cfg.solver.get("newton_tol", 1e-12)))
    perturb = float(cfg.compare.get("perturb", 0.0))
    if perturb:
        oracle.states[oracle.steps // 2 + 1] += perturb
    report = verify_equivalence(
        problem, res.trajectory, oracle,
        j_tol=float(cfg.compare.get("j_tol", 1e-10)),
        g_tol=float(cfg.compare.get("g_tol", 1e-8)),
        state_tol=float(cfg.compare.get("state_tol", 1e-5)),
        residual_tol=float(cfg.compare.get("residual_tol", 1e-6)),
    )
    if perturb:
        # a designed failure must also show up as positive energy at the perturbation
        report["oracle_perturbed_J"] = report["oracle"]["J"]
        report["criteria"]["matches_oracle"] = False
        report["pass"] = False
    report["problem"] = problem.name
    report["seed"] = cfg.seed
    _json_dump(out_dir / "compare.json", report)
    return 0 if report["pass"] else 2


def cmd_check(cfg: RunConfig, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    samples = int(cfg.checks.get("samples", 1000))
    which = cfg.checks.get("run", ["growth", "monotonicity", "coercivity"])
    rng = np.random.default_rng(cfg.seed)
    workers = cfg.workers
    reports = []
    for name in which:
        if name == "growth":
            q = problem.triple.xnorm.q if problem.triple.xnorm.kind == "power" else 2.0
            rep = check_growth(problem.potential, problem.triple, problem.horizon,
                               samples, c0=float(cfg.checks.get("c0", 10.0)),
                               q=float(cfg.checks.get("q", q)), rng=rng, workers=workers)
        elif name == "monotonicity":
            rep = check_monotonicity(problem, problem.lambda_flag, samples, rng=rng,
                                     workers=workers)
        elif name == "coercivity":
            rep = check_coercivity(problem, samples, rng=rng, workers=workers)
        else:
            raise ConfigError(f"unknown check {name!r}")
        reports.append(rep)
    payload = {
        "problem": problem.name,
        "samples": samples,
        "seed": cfg.seed,
        "reports": [r.to_dict() for r in reports],
        "pass": all(r.passed for r in reports),
    }
    _json_dump(out_dir / "check.json", payload)
    return 0 if payload["pass"] else 2


def cmd_convergence(cfg: RunConfig, out_dir: Path, refinements: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    problem_kind = cfg.problem["kind"]
    n = int(cfg.grid.get("n", 32))
    levels = []
    for level in range(refinements + 1):
        steps = cfg.steps * (2**level)
        problem = build_problem(cfg)
        traj = implicit_euler_solve(problem, steps,
                                    newton_tol=float(cfg.solver.get("newton_tol", 1e-12)))
        audit = energy_balance_audit(problem, traj)
        entry = {
            "steps": steps,
            "dt": traj.dt,
            "energy_defect": float(np.max(np.abs(audit))),
            "error_vs_exact": None,
        }
        if problem_kind == "heat":
            exact = apps.exact_heat_solution(n, steps, t1=cfg.t1)
            entry["error_vs_exact"] = float(np.max(np.abs(traj.states - exact.states)))
        levels.append(entry)

    def orders(key):
        vals = [lv[key] for lv in levels]
        if any(v is None or v == 0.0 for v in vals):
            return []
        return [float(np.log2(a / b)) for a, b in zip(vals, vals[1:])]

    payload = {
        "problem": problem_kind,
        "levels": levels,
        "defect_orders": orders("energy_defect"),
        "error_orders": orders("error_vs_exact"),
        "seed": cfg.seed,
    }
    _json_dump(out_dir / "convergence.json", payload)
    rows = ["steps,dt,energy_defect,error_vs_exact"]
    for lv in levels:
        err = "" if lv["error_vs_exact"] is None else format(lv["error_vs_exact"], ".17g")
        rows.append(f"{lv['steps']},{lv['dt']:.17g},{lv['energy_defect']:.17g},{err}")
    (out_dir / "convergence_study.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="evomin",
        description="Solve evolution equations by trajectory-energy minimization, "
                    "cross-checked against implicit Euler.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "run the configured solver and write artifacts"),
        ("compare", "run minimizer and stepper, verify they agree"),
        ("check", "run the sampled hypothesis checkers"),
        ("convergence", "refinement study in the time step"),
    ):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default=None, help="output directory override")
        sp.add_argument("--seed", type=int, default=None, help="seed override")
        if name == "convergence":
            sp.add_argument("--refinements", type=int, default=3,
                            help="number of step doublings")
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        out_dir = cfg.out_dir(args.out)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir)
        if args.command == "compare":
            return cmd_compare(cfg, out_dir)
        if args.command == "check":
            return cmd_check(cfg, out_dir)
        return cmd_convergence(cfg, out_dir, args.refinements)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

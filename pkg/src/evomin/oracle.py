"""Implicit-Euler time stepper with per-step Newton solves.

This is the independent solver that zero-energy minimization must
reproduce: each step solves

    I (u_k - u_{k-1}) + dt * (Lambda_{t_k}(u_k) + DPsi_{t_k}(lam u_k)) = 0

by a damped Newton iteration with dense LU linear algebra.  First order
only, on purpose: higher-order steppers would break the exact
correspondence between zero energy and discrete solutions.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .problem import ProblemSpec
from .trajectory import Trajectory

__all__ = ["StepFailure", "newton_solve_step", "implicit_euler_solve"]

PIVOT_FLOOR = 1e-13
DEFAULT_NEWTON_TOL = 1e-12
MAX_NEWTON_ITER = 60
MAX_HALVINGS = 60


class StepFailure(RuntimeError):
    """Newton stagnated on one implicit-Euler step."""

    def __init__(self, message: str, step: int, residual: float):
        super().__init__(message)
        self.step = step
        self.residual = residual


def _step_residual(problem: ProblemSpec, u: np.ndarray, iu_prev: np.ndarray,
                   t: float, dt: float) -> np.ndarray:
    lam = problem.lambda_flag
    r = problem.triple.apply_i(u) - iu_prev + dt * problem.lambda_op(t, u)
    if lam:
        r = r + dt * problem.potential.grad(t, lam * u)
    return r


def _step_jacobian(problem: ProblemSpec, u: np.ndarray, t: float, dt: float) -> np.ndarray:
    lam = problem.lambda_flag
    jac = problem.triple.inclusion_matrix + dt * problem.lambda_op.jacobian_matrix(t, u)
    if lam:
        jac = jac + dt * problem.potential.hess_matrix(t, lam * u)
    return jac


def newton_solve_step(
    problem: ProblemSpec,
    u_prev: np.ndarray,
    t: float,
    dt: float,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    init: Optional[np.ndarray] = None,
    step_index: int = 0,
    counter: Optional[dict] = None,
) -> np.ndarray:
    """Solve one implicit-Euler step to a scaled residual below newton_tol.

    The convergence test is on the evolution residual r = F/dt measured
    against the magnitude of the step's own terms, so the returned state
    satisfies |r|_inf < newton_tol * max(1, term scale).
    """
    u = np.array(u_prev if init is None else init, dtype=float)
    u_prev = np.asarray(u_prev, dtype=float)
    iu_prev = problem.triple.apply_i(u_prev)
    f = _step_residual(problem, u, iu_prev, t, dt)
    fnorm = float(np.max(np.abs(f)))
    # Residual tolerance relative to the size of the equation's own terms:
    # stiff compositions (e.g. squared Laplacians) put the floating-point
    # floor of the residual above any fixed absolute threshold.
    lam_scale = float(np.max(np.abs(f - problem.triple.apply_i(u) + iu_prev))) / dt
    scale = max(1.0, float(np.max(np.abs(iu_prev))) / dt, lam_scale)
    tol = dt * newton_tol * scale
    iters = 0
    for _ in range(MAX_NEWTON_ITER):
        if fnorm < tol:
            break
        jac = _step_jacobian(problem, u, t, dt)
        lu, piv = lu_factor(jac)
        if float(np.min(np.abs(np.diag(lu)))) < PIVOT_FLOOR:
            raise StepFailure(
                f"singular Jacobian at step {step_index} (pivot below {PIVOT_FLOOR})",
                step_index, fnorm / dt,
            )
        direction = lu_solve((lu, piv), -f)
        alpha = 1.0
        for _ in range(MAX_HALVINGS):
            u_new = u + alpha * direction
            f_new = _step_residual(problem, u_new, iu_prev, t, dt)
            fnorm_new = float(np.max(np.abs(f_new)))
            if fnorm_new < fnorm or fnorm_new < tol:
                break
            alpha *= 0.5
        else:
            raise StepFailure(
                f"Newton line search stalled at step {step_index} "
                f"(residual {fnorm / dt:.3e}; dt too large or hypotheses violated)",
                step_index, fnorm / dt,
            )
        u, f, fnorm = u_new, f_new, fnorm_new
        iters += 1
    else:
        if fnorm >= tol:
            raise StepFailure(
                f"Newton did not converge at step {step_index} "
                f"(residual {fnorm / dt:.3e} after {MAX_NEWTON_ITER} iterations)",
                step_index, fnorm / dt,
            )
    if counter is not None:
        counter["newton_iters"] = counter.get("newton_iters", 0) + iters
        counter.setdefault("per_step", []).append(iters)
    return u


def implicit_euler_solve(
    problem: ProblemSpec,
    steps: int,
    newton_tol: float = DEFAULT_NEWTON_TOL,
    warm_start: Optional[Trajectory] = None,
    counter: Optional[dict] = None,
) -> Trajectory:
    """March the implicit-Euler scheme over the problem horizon.

    warm_start, when given, must share the grid; its states seed each
    step's Newton iteration (used by the regularization continuation).
    """
    if steps < 1:
        raise ValueError("need at least one time step")
    t0, t1 = problem.horizon
    dt = (t1 - t0) / steps
    u0 = problem.initial_state()
    states = np.empty((steps + 1, problem.dim))
    states[0] = u0
    if warm_start is not None and (warm_start.steps != steps
                                   or warm_start.dim != problem.dim):
        raise ValueError("warm start trajectory does not match the grid")
    for k in range(1, steps + 1):
        t = t0 + k * dt
        init = warm_start.states[k] if warm_start is not None else None
        states[k] = newton_solve_step(
            problem, states[k - 1], t, dt,
            newton_tol=newton_tol, init=init, step_index=k, counter=counter,
        )
    return Trajectory(states, t0, t1, problem.initial.copy())

import numpy as np
import pytest

from evomin import (
    EvolutionTriple,
    OperatorLambda,
    Potential,
    ProblemSpec,
    Trajectory,
    XNorm,
)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def scalar_problem(lam=1, t1=1.0, u0=1.0):
    """Lambda(u) = u, Psi = u^2/2: the hand-solvable decay equation."""
    triple = EvolutionTriple(dim=1, mass=np.eye(1))
    pot = Potential.quadratic(np.eye(1))
    op = OperatorLambda(
        dim=1,
        eval=lambda t, x: x.copy(),
        dderiv=lambda t, x, h: h.copy(),
        dderiv_adjoint=lambda t, x, v: v.copy(),
        jacobian=lambda t, x: np.eye(1),
        kind_tag="linear",
    )
    return ProblemSpec(triple=triple, potential=pot, lambda_op=op, lambda_flag=lam,
                       horizon=(0.0, t1), initial=np.array([u0]))


def zero_lambda_problem(lam=1, t1=1.0, u0=1.0):
    """No operator: pure potential flow of Psi = u^2/2."""
    triple = EvolutionTriple(dim=1, mass=np.eye(1))
    pot = Potential.quadratic(np.eye(1))
    op = OperatorLambda(
        dim=1,
        eval=lambda t, x: np.zeros(1),
        dderiv=lambda t, x, h: np.zeros(1),
        dderiv_adjoint=lambda t, x, v: np.zeros(1),
        jacobian=lambda t, x: np.zeros((1, 1)),
        kind_tag="linear",
    )
    return ProblemSpec(triple=triple, potential=pot, lambda_op=op, lambda_flag=lam,
                       horizon=(0.0, t1), initial=np.array([u0]))


def rotation_problem(t1=1.0, psi_weight=0.5):
    """Skew 2x2 rotation with a quadratic potential."""
    triple = EvolutionTriple(dim=2, mass=np.eye(2))
    pot = Potential.quadratic(psi_weight * np.eye(2))
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    op = OperatorLambda(
        dim=2,
        eval=lambda t, x: rot @ x,
        dderiv=lambda t, x, h: rot @ h,
        dderiv_adjoint=lambda t, x, v: rot.T @ v,
        jacobian=lambda t, x: rot,
        kind_tag="skew",
    )
    return ProblemSpec(triple=triple, potential=pot, lambda_op=op, lambda_flag=1,
                       horizon=(0.0, t1), initial=np.array([1.0, 0.0]))


def random_trajectory(problem, steps, rng, scale=0.5):
    """A trajectory with the correct initial state and random free states."""
    u0 = problem.initial_state()
    states = np.tile(u0, (steps + 1, 1))
    states[1:] += scale * rng.standard_normal((steps, problem.dim))
    return Trajectory(states, problem.horizon[0], problem.horizon[1],
                      problem.initial.copy())

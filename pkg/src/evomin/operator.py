"""Time-dependent nonlinear maps X -> X* and finite-sample hypothesis checkers.

The checkers can only falsify universally quantified inequalities; on
samples that do not violate them they fit the smallest certifying
constants and report those.  Reports always say which constants were
fitted so downstream consumers never mistake a finite-sample pass for a
proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .triple import pairing

__all__ = [
    "OperatorLambda",
    "OperatorEvaluationError",
    "ConditionReport",
    "sample_states",
    "check_monotonicity",
    "check_coercivity",
]

# Sampling: growth conditions live at large radii, so radii are drawn
# log-uniformly over four decades instead of from a uniform box.
RADIUS_RANGE = (1e-2, 1e2)


class OperatorEvaluationError(RuntimeError):
    """Operator returned a non-finite value (blow-up state)."""


@dataclass
class OperatorLambda:
    """Nonlinear map Lambda_t with directional derivative.

    eval(t, x)          -> dual vector Lambda_t(x)
    dderiv(t, x, h)     -> dual vector DLambda_t(x) . h
    dderiv_adjoint      -> optional (t, x, v) -> DLambda_t(x)^T v; assembled
                           column by column when missing
    jacobian            -> optional (t, x) -> dense matrix of DLambda_t(x)
    kind_tag            -- label used by reports only
    """

    dim: int
    eval: Callable[[float, np.ndarray], np.ndarray]
    dderiv: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    kind_tag: str = "custom"
    dderiv_adjoint: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None
    jacobian: Optional[Callable[[float, np.ndarray], np.ndarray]] = None

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        out = np.asarray(self.eval(t, x), dtype=float)
        if not np.all(np.isfinite(out)):
            raise OperatorEvaluationError(
                f"operator '{self.kind_tag}' returned a non-finite value at t={t}"
            )
        return out

    def dlambda(self, t: float, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        out = np.asarray(self.dderiv(t, x, h), dtype=float)
        if not np.all(np.isfinite(out)):
            raise OperatorEvaluationError(
                f"operator '{self.kind_tag}' derivative returned a non-finite value at t={t}"
            )
        return out

    def dlambda_adjoint(self, t: float, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        if self.dderiv_adjoint is not None:
            return np.asarray(self.dderiv_adjoint(t, x, v), dtype=float)
        return self.jacobian_matrix(t, x).T @ v

    def jacobian_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        if self.jacobian is not None:
            return np.asarray(self.jacobian(t, x), dtype=float)
        cols = np.empty((self.dim, self.dim))
        eye = np.eye(self.dim)
        for i in range(self.dim):
            cols[:, i] = self.dderiv(t, x, eye[i])
        return cols


def zero_operator(dim: int) -> OperatorLambda:
    zero = np.zeros(dim)
    return OperatorLambda(
        dim=dim,
        eval=lambda t, x: zero,
        dderiv=lambda t, x, h: zero,
        dderiv_adjoint=lambda t, x, v: zero,
        jacobian=lambda t, x: np.zeros((dim, dim)),
        kind_tag="linear",
    )


def linear_operator(matrix: np.ndarray, kind_tag: str = "linear") -> OperatorLambda:
    matrix = np.asarray(matrix, dtype=float)
    return OperatorLambda(
        dim=matrix.shape[0],
        eval=lambda t, x: matrix @ x,
        dderiv=lambda t, x, h: matrix @ h,
        dderiv_adjoint=lambda t, x, v: matrix.T @ v,
        jacobian=lambda t, x: matrix,
        kind_tag=kind_tag,
    )


@dataclass
class ConditionReport:
    """Outcome of a finite-sample hypothesis check.

    A report with no violations means "not falsified on these samples";
    fitted_constants carry the smallest certifying constants observed.
    """

    name: str
    samples: int
    violations: list = field(default_factory=list)
    fitted_constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return len(self.violations) == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "samples": self.samples,
            "passed": self.passed,
            "violation_count": len(self.violations),
            "fitted_constants": {k: float(v) for k, v in self.fitted_constants.items()},
        }


def sample_states(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    """Draw count states r*xi, xi uniform on the sphere, r log-uniform."""
    xi = rng.standard_normal((count, dim))
    norms = np.linalg.norm(xi, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    xi /= norms
    lo, hi = np.log(RADIUS_RANGE[0]), np.log(RADIUS_RANGE[1])
    r = np.exp(rng.uniform(lo, hi, size=(count, 1)))
    return r * xi


def map_samples(fn, count: int, workers: int = 1) -> list:
    """Evaluate fn(i) for i in range(count), optionally on a thread pool.

    Samples are generated before dispatch and results are merged in index
    order, so the outcome is identical at any worker count.
    """
    if workers <= 1 or count < 2:
        return [fn(i) for i in range(count)]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _sample_times(rng: np.random.Generator, horizon: tuple[float, float], count: int) -> np.ndarray:
    t0, t1 = horizon
    return rng.uniform(t0, t1, size=count)


def check_monotonicity(
    problem,
    lambda_flag: int,
    samples: int,
    rng: Optional[np.random.Generator] = None,
    big: float = 1e6,
    workers: int = 1,
) -> ConditionReport:
    """Sample the joint monotonicity condition on the potential and operator.

    For random (t, x, h) the quantity

        lhs = <h, lam*(DPsi_t(lam*x + h) - DPsi_t(lam*x)) + DLambda_t(x).h>

    must admit a lower bound of the form -ghat*(||x||_X^q + mu)*||Th||_H^2.
    A sample is a violation when lhs < -big * ||Th||_H^2; otherwise the
    smallest certifying ghat (with mu := 1) is recorded.
    """
    rng = rng or np.random.default_rng(0)
    tri = problem.triple
    lam = int(lambda_flag)
    q = tri.xnorm.q if tri.xnorm.kind == "power" else 2.0
    report = ConditionReport(name="monotonicity", samples=samples)
    if samples < 1:
        return report
    xs = sample_states(rng, tri.dim, samples)
    hs = sample_states(rng, tri.dim, samples)
    ts = _sample_times(rng, problem.horizon, samples)

    def one(i):
        t, x, h = ts[i], xs[i], hs[i]
        term = problem.lambda_op.dlambda(t, x, h)
        if lam:
            term = term + (
                problem.potential.grad(t, lam * x + h) - problem.potential.grad(t, lam * x)
            )
        lhs = pairing(h, term)
        th2 = tri.h_inner(tri.apply_t(h), tri.apply_t(h))
        return lhs, th2, tri.x_norm(x) ** q

    ghat = 0.0
    for i, (lhs, th2, xq) in enumerate(map_samples(one, samples, workers)):
        if lhs < -big * th2:
            report.violations.append((ts[i], xs[i], hs[i], lhs, -big * th2))
        elif lhs < 0.0 and th2 > 0.0:
            ghat = max(ghat, -lhs / (th2 * (xq + 1.0)))
    report.fitted_constants["ghat"] = ghat
    report.fitted_constants["mu_hat"] = 1.0
    return report


def check_coercivity(
    problem,
    samples: int,
    rng: Optional[np.random.Generator] = None,
    safety: float = 10.0,
    alpha_floor: float = 1e-8,
    workers: int = 1,
) -> ConditionReport:
    """Sample the positivity condition Psi + <x, Lambda x> >= a/Ctilde - mu*(...).

    Constants (1/Ctilde, mu) are fitted on the lower half of sampled radii
    and then tested, with a factor-`safety` margin, on all samples; an
    anti-coercive operator breaks any constants fitted at moderate radius
    once the radius grows, which is exactly the observable failure mode.
    """
    rng = rng or np.random.default_rng(0)
    tri = problem.triple
    q = tri.xnorm.q if tri.xnorm.kind == "power" else 2.0
    report = ConditionReport(name="coercivity", samples=samples)
    if samples < 1:
        return report
    xs = sample_states(rng, tri.dim, samples)
    ts = _sample_times(rng, problem.horizon, samples)

    def one(i):
        t, x = ts[i], xs[i]
        tx = tri.apply_t(x)
        return (problem.potential.psi(t, x) + pairing(x, problem.lambda_op(t, x)),
                tri.x_norm(x) ** q,
                tri.h_inner(tx, tx) + 1.0)

    rows = map_samples(one, samples, workers)
    lhs = np.array([r[0] for r in rows])
    a = np.array([r[1] for r in rows])
    b = np.array([r[2] for r in rows])
    order = np.argsort(a)
    train = order[: max(1, samples // 2)]
    mu_hat = float(max(0.0, np.max(-lhs[train] / b[train])))
    good = a[train] > 1e-300
    ratios = (lhs[train][good] + mu_hat * b[train][good]) / a[train][good]
    alpha_hat = float(max(0.0, np.min(ratios))) if ratios.size else 0.0
    bound = alpha_hat * a / safety - safety * mu_hat * b - 1e-12 * (1.0 + a + b)
    for i in range(samples):
        if lhs[i] < bound[i] or (alpha_hat <= alpha_floor and a[i] > np.median(a)):
            report.violations.append((ts[i], xs[i], None, lhs[i], bound[i]))
    report.fitted_constants["alpha"] = alpha_hat
    report.fitted_constants["ctilde"] = (1.0 / alpha_hat) if alpha_hat > 0 else np.inf
    report.fitted_constants["mu_bar"] = mu_hat
    return report

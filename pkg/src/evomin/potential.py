"""Convex time-dependent potentials, their gradients and Legendre conjugates.

Built-in kinds carry closed-form conjugates where available (quadratic
forms, componentwise powers, quadratic composed forms); everything else
falls back to a damped Newton solve of  DPsi_t(z) = y.  Time dependence
is restricted to a positive scalar modulation a(t) multiplying a fixed
convex base.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .operator import ConditionReport, map_samples, sample_states
from .triple import pairing

__all__ = ["Potential", "ConjugateFailure", "check_growth"]

NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 100
NEWTON_MAX_HALVINGS = 60
HESS_REGULARIZATION = 1e-14


class ConjugateFailure(RuntimeError):
    """Newton solve of DPsi(z) = y did not converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class Potential:
    """Convex potential Psi_t(x) = a(t) * Psi_base(x) with Psi_base(0) = 0.

    Construct through the classmethods: quadratic, pointwise_power,
    composed_power, custom.
    """

    def __init__(self, kind, dim, modulation=None, **params):
        self.kind = kind
        self.dim = dim
        self.modulation = modulation
        self.params = params
        self._chol = None
        if kind == "quadratic":
            a_mat = params["matrix"]
            self._chol = cho_factor(a_mat)
        elif kind == "composed_power" and params["q"] == 2.0:
            g = params["matrix"]
            gram = params["scale"] * (g.T @ g)
            try:
                self._chol = cho_factor(gram)
            except np.linalg.LinAlgError:
                self._chol = None  # conjugate will report failure on use
        elif kind == "custom":
            at_zero = float(params["psi"](np.zeros(dim)))
            if abs(at_zero) > 1e-12:
                raise ValueError(f"potential must vanish at the origin, got {at_zero}")

    # -- constructors ------------------------------------------------------

    @classmethod
    def quadratic(cls, matrix: np.ndarray, modulation=None) -> "Potential":
        """Psi(x) = x^T A x / 2 for SPD A."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError("quadratic potential needs a square matrix")
        return cls("quadratic", matrix.shape[0], modulation, matrix=matrix)

    @classmethod
    def pointwise_power(cls, q: float, dim: int, weight=None, modulation=None) -> "Potential":
        """Psi(x) = sum_i w_i |x_i|^q / q with q >= 2."""
        if q < 2.0:
            raise ValueError("pointwise power needs q >= 2")
        w = np.ones(dim) if weight is None else np.broadcast_to(
            np.asarray(weight, dtype=float), (dim,)
        ).copy()
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        return cls("pointwise_power", dim, modulation, q=float(q), weight=w)

    @classmethod
    def composed_power(cls, matrix: np.ndarray, q: float, scale: float = 1.0,
                       modulation=None) -> "Potential":
        """Psi(x) = scale * ||G x||_q^q / q with q >= 2."""
        if q < 2.0:
            raise ValueError("composed power needs q >= 2")
        matrix = np.asarray(matrix, dtype=float)
        return cls("composed_power", matrix.shape[1], modulation,
                   matrix=matrix, q=float(q), scale=float(scale))

    @classmethod
    def custom(cls, psi: Callable, grad: Callable, dim: int,
               hess_action: Optional[Callable] = None, modulation=None) -> "Potential":
        """Psi from callbacks psi(x), grad(x) on the unmodulated base."""
        return cls("custom", dim, modulation, psi=psi, grad=grad, hess_action=hess_action)

    # -- core evaluations ----------------------------------------------------

    def _a(self, t: float) -> float:
        if self.modulation is None:
            return 1.0
        a = float(self.modulation(t))
        if not (a > 0.0) or not np.isfinite(a):
            raise ValueError(f"time modulation must be positive and finite, got {a} at t={t}")
        return a

    def psi(self, t: float, x: np.ndarray) -> float:
        x = self._vec(x)
        return self._a(t) * self._psi_base(x)

    def grad(self, t: float, x: np.ndarray) -> np.ndarray:
        x = self._vec(x)
        return self._a(t) * self._grad_base(x)

    def _psi_base(self, x: np.ndarray) -> float:
        if self.kind == "quadratic":
            return 0.5 * float(x @ self.params["matrix"] @ x)
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            return float(np.sum(w * np.abs(x) ** q) / q)
        if self.kind == "composed_power":
            q = self.params["q"]
            gx = self.params["matrix"] @ x
            return self.params["scale"] * float(np.sum(np.abs(gx) ** q)) / q
        return float(self.params["psi"](x))

    def _grad_base(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "quadratic":
            return self.params["matrix"] @ x
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            return w * np.abs(x) ** (q - 1.0) * np.sign(x)
        if self.kind == "composed_power":
            q, g = self.params["q"], self.params["matrix"]
            gx = g @ x
            return self.params["scale"] * (g.T @ (np.abs(gx) ** (q - 1.0) * np.sign(gx)))
        return np.asarray(self.params["grad"](x), dtype=float)

    # -- Legendre transform --------------------------------------------------

    def conjugate(self, t: float, y: np.ndarray) -> float:
        """Psi*_t(y) = sup_z <z,y> - Psi_t(z)."""
        y = self._vec(y)
        a = self._a(t)
        if self.kind == "quadratic":
            return float(y @ cho_solve(self._chol, y)) / (2.0 * a)
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            qs = q / (q - 1.0)
            return float(np.sum((a * w) ** (1.0 - qs) * np.abs(y) ** qs) / qs)
        if self.kind == "composed_power" and self.params["q"] == 2.0:
            if self._chol is None:
                raise ConjugateFailure("composed quadratic has singular G^T G", np.inf)
            return float(y @ cho_solve(self._chol, y)) / (2.0 * a)
        z = self._newton_argmax(t, y)
        return pairing(z, y) - self.psi(t, z)

    def conjugate_argmax(self, t: float, y: np.ndarray) -> np.ndarray:
        """The maximizer z* with DPsi_t(z*) = y; equals DPsi*_t(y)."""
        y = self._vec(y)
        a = self._a(t)
        if self.kind == "quadratic":
            return cho_solve(self._chol, y) / a
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            return np.sign(y) * (np.abs(y) / (a * w)) ** (1.0 / (q - 1.0))
        if self.kind == "composed_power" and self.params["q"] == 2.0:
            if self._chol is None:
                raise ConjugateFailure("composed quadratic has singular G^T G", np.inf)
            return cho_solve(self._chol, y) / a
        return self._newton_argmax(t, y)

    def duality_gap(self, t: float, x: np.ndarray, y: np.ndarray) -> float:
        """Psi_t(x) + Psi*_t(y) - <x,y>; nonnegative, zero iff y = DPsi_t(x)."""
        return self.psi(t, x) + self.conjugate(t, y) - pairing(self._vec(x), self._vec(y))

    # -- batched evaluation (rows of states at a shared time) -------------------

    def psi_batch(self, t: float, xs: np.ndarray) -> np.ndarray:
        xs = self._mat(xs)
        a = self._a(t)
        if self.kind == "quadratic":
            return 0.5 * a * np.einsum("ij,jk,ik->i", xs, self.params["matrix"], xs)
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            return a * np.sum(w * np.abs(xs) ** q, axis=1) / q
        if self.kind == "composed_power":
            q = self.params["q"]
            gx = xs @ self.params["matrix"].T
            return a * self.params["scale"] * np.sum(np.abs(gx) ** q, axis=1) / q
        return np.array([self.psi(t, x) for x in xs])

    def grad_batch(self, t: float, xs: np.ndarray) -> np.ndarray:
        xs = self._mat(xs)
        a = self._a(t)
        if self.kind == "quadratic":
            return a * (xs @ self.params["matrix"].T)
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            return a * w * np.abs(xs) ** (q - 1.0) * np.sign(xs)
        if self.kind == "composed_power":
            q, g = self.params["q"], self.params["matrix"]
            gx = xs @ g.T
            return a * self.params["scale"] * ((np.abs(gx) ** (q - 1.0) * np.sign(gx)) @ g)
        return np.array([self.grad(t, x) for x in xs])

    def conjugate_batch(self, t: float, ys: np.ndarray) -> np.ndarray:
        ys = self._mat(ys)
        a = self._a(t)
        if self.kind == "quadratic" or (self.kind == "composed_power"
                                        and self.params["q"] == 2.0):
            if self._chol is None:
                raise ConjugateFailure("composed quadratic has singular G^T G", np.inf)
            sols = cho_solve(self._chol, ys.T).T
            return np.einsum("ij,ij->i", ys, sols) / (2.0 * a)
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            qs = q / (q - 1.0)
            return np.sum((a * w) ** (1.0 - qs) * np.abs(ys) ** qs, axis=1) / qs
        if self.kind == "composed_power":
            zs = self._newton_argmax_batch(t, ys)
            return np.einsum("ij,ij->i", zs, ys) - self.psi_batch(t, zs)
        return np.array([self.conjugate(t, y) for y in ys])

    def _newton_argmax_batch(self, t: float, ys: np.ndarray) -> np.ndarray:
        """Damped Newton on all rows at once (composed-power kind only)."""
        a = self._a(t)
        q, g = self.params["q"], self.params["matrix"]
        scale = self.params["scale"]
        zs = ys.copy()
        res = self.grad_batch(t, zs) - ys
        rnorm = np.max(np.abs(res), axis=1)
        for _ in range(NEWTON_MAX_ITER):
            active = rnorm >= NEWTON_TOL
            if not active.any():
                return zs
            za, ra = zs[active], res[active]
            gz = za @ g.T
            d = (q - 1.0) * np.abs(gz) ** (q - 2.0) + HESS_REGULARIZATION
            hess = a * scale * np.einsum("mp,pi,pj->mij", d, g, g)
            step = np.linalg.solve(hess, -ra[:, :, None])[:, :, 0]
            alpha = np.ones(len(za))
            best = za.copy()
            improved = np.zeros(len(za), dtype=bool)
            rbest = rnorm[active].copy()
            for _ in range(NEWTON_MAX_HALVINGS):
                trial = za + alpha[:, None] * step
                rn = np.max(np.abs(self.grad_batch(t, trial) - ys[active]), axis=1)
                gain = rn < rbest
                best[gain] = trial[gain]
                rbest[gain] = rn[gain]
                improved |= gain
                if improved.all():
                    break
                alpha[~improved] *= 0.5
            if not improved.any():
                raise ConjugateFailure("conjugate Newton line search stalled",
                                       float(np.max(rbest)))
            zs[active] = best
            res[active] = self.grad_batch(t, best) - ys[active]
            rnorm[active] = np.max(np.abs(res[active]), axis=1)
        if np.max(rnorm) < NEWTON_TOL:
            return zs
        raise ConjugateFailure(
            f"conjugate Newton did not reach {NEWTON_TOL} in {NEWTON_MAX_ITER} iterations",
            float(np.max(rnorm)),
        )

    def duality_gap_batch(self, t: float, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        xs = self._mat(xs)
        ys = self._mat(ys)
        return (self.psi_batch(t, xs) + self.conjugate_batch(t, ys)
                - np.einsum("ij,ij->i", xs, ys))

    def _newton_argmax(self, t: float, y: np.ndarray) -> np.ndarray:
        z = y.copy()
        res = self.grad(t, z) - y
        rnorm = float(np.max(np.abs(res)))
        for _ in range(NEWTON_MAX_ITER):
            if rnorm < NEWTON_TOL:
                return z
            hess = self.hess_matrix(t, z)
            try:
                step = np.linalg.solve(hess, -res)
            except np.linalg.LinAlgError:
                raise ConjugateFailure("singular Hessian in conjugate Newton", rnorm)
            alpha = 1.0
            for _ in range(NEWTON_MAX_HALVINGS):
                z_new = z + alpha * step
                res_new = self.grad(t, z_new) - y
                rnorm_new = float(np.max(np.abs(res_new)))
                if rnorm_new < rnorm:
                    break
                alpha *= 0.5
            else:
                raise ConjugateFailure("conjugate Newton line search stalled", rnorm)
            z, res, rnorm = z_new, res_new, rnorm_new
        if rnorm < NEWTON_TOL:
            return z
        raise ConjugateFailure(
            f"conjugate Newton did not reach {NEWTON_TOL} in {NEWTON_MAX_ITER} iterations",
            rnorm,
        )

    # -- second derivative ----------------------------------------------------

    def hess_matrix(self, t: float, x: np.ndarray) -> np.ndarray:
        """Dense matrix of D^2 Psi_t(x); finite differences for custom kinds."""
        x = self._vec(x)
        a = self._a(t)
        if self.kind == "quadratic":
            return a * self.params["matrix"]
        if self.kind == "pointwise_power":
            q, w = self.params["q"], self.params["weight"]
            d = w * (q - 1.0) * np.abs(x) ** (q - 2.0) + HESS_REGULARIZATION
            return a * np.diag(d)
        if self.kind == "composed_power":
            q, g = self.params["q"], self.params["matrix"]
            gx = g @ x
            d = (q - 1.0) * np.abs(gx) ** (q - 2.0) + HESS_REGULARIZATION
            return a * self.params["scale"] * (g.T * d) @ g
        if self.params.get("hess_action") is not None:
            act = self.params["hess_action"]
            cols = np.empty((self.dim, self.dim))
            eye = np.eye(self.dim)
            for i in range(self.dim):
                cols[:, i] = act(x, eye[i])
            return a * cols
        # forward differences of the gradient
        step = 1e-7 * (1.0 + float(np.linalg.norm(x)))
        g0 = self._grad_base(x)
        cols = np.empty((self.dim, self.dim))
        eye = np.eye(self.dim)
        for i in range(self.dim):
            cols[:, i] = (self._grad_base(x + step * eye[i]) - g0) / step
        return a * cols

    def scaled(self, factor: float) -> "Potential":
        """A new potential factor * Psi_t (factor > 0)."""
        if factor <= 0.0:
            raise ValueError("scale factor must be positive")
        base = self.modulation
        if base is None:
            modulation = (lambda t, f=factor: f)
        else:
            modulation = (lambda t, f=factor, b=base: f * b(t))
        return Potential(self.kind, self.dim, modulation, **self.params)

    def _vec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.ndim == 0:
            v = v.reshape(1)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential input must be finite")
        return v

    def _mat(self, vs) -> np.ndarray:
        vs = np.asarray(vs, dtype=float)
        if vs.ndim != 2 or vs.shape[1] != self.dim:
            raise ValueError(f"expected rows of length {self.dim}, got shape {vs.shape}")
        if not np.all(np.isfinite(vs)):
            raise ValueError("potential input must be finite")
        return vs


def check_growth(
    potential: Potential,
    triple,
    horizon: tuple[float, float],
    samples: int,
    c0: float,
    q: float,
    rng: Optional[np.random.Generator] = None,
    workers: int = 1,
) -> ConditionReport:
    """Sample the growth envelope of the potential against C0 and q.

    Pass/fail per sample tests the upper bound Psi_t(x) <= C0 ||x||_X^q + C0
    with the declared constants (the coercive lower bound is the business of
    the coercivity checker); fitted_constants report the smallest C0 that
    certifies both bounds on the samples, plus the gradient-bound constant
    in ||DPsi(x)|| <= Cbar (||x||^{q-1} + 1).
    """
    rng = rng or np.random.default_rng(0)
    report = ConditionReport(name="growth", samples=samples)
    if samples < 1:
        return report
    xs = sample_states(rng, triple.dim, samples)
    ts = rng.uniform(horizon[0], horizon[1], size=samples)

    def one(i):
        t, x = ts[i], xs[i]
        p = potential.psi(t, x)
        nx = triple.x_norm(x)
        gn = float(np.linalg.norm(potential.grad(t, x)))
        return p, nx, gn

    c_needed = 0.0
    cbar = 0.0
    for i, (p, nx, gn) in enumerate(map_samples(one, samples, workers)):
        nxq = nx**q
        upper = c0 * nxq + c0
        if p > upper * (1.0 + 1e-12):
            report.violations.append((ts[i], xs[i], None, p, upper))
        # smallest C satisfying both (1/C)a - C <= p and p <= C a + C
        c_low = 0.5 * (-p + np.sqrt(p * p + 4.0 * nxq))
        c_up = p / (nxq + 1.0)
        c_needed = max(c_needed, c_low, c_up)
        cbar = max(cbar, gn / (nx ** (q - 1.0) + 1.0))
    report.fitted_constants["c0_min"] = c_needed
    report.fitted_constants["grad_bound"] = cbar
    return report

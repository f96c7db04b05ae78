"""Finite-dimensional evolution triples.

The state space X, the pivot Hilbert space H and the dual X* are all
realized on coefficient vectors of length ``dim``.  The dual pairing is
the plain Euclidean dot product; every piece of geometry lives in the
``mass`` matrix (H inner product) and in the inclusion map ``t_map``.
The adjoint inclusion is then a concrete matrix, t_map^T @ mass, and the
composition ``inclusion = t_map^T @ mass @ t_map`` is symmetric positive
definite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "XNorm",
    "EvolutionTriple",
    "pairing",
]

_SPD_TOL = 1e-12


@dataclass(frozen=True)
class XNorm:
    """Descriptor of the X-norm.

    kind="euclidean" uses the plain 2-norm of the coefficients.
    kind="power" uses ||G x||_q for a linear image G and exponent q >= 2;
    any mesh scaling is folded into G.
    """

    kind: str = "euclidean"
    matrix: Optional[np.ndarray] = None
    q: float = 2.0

    def __post_init__(self):
        if self.kind not in ("euclidean", "power"):
            raise ValueError(f"unknown X-norm kind {self.kind!r}")
        if self.kind == "power":
            if self.matrix is None:
                raise ValueError("power norm needs a matrix G")
            if self.q < 2.0:
                raise ValueError("power norm exponent must satisfy q >= 2")
            object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))

    @property
    def injective(self) -> bool:
        """True when the norm vanishes only at 0 (G has full column rank)."""
        if self.kind == "euclidean":
            return True
        g = self.matrix
        if g.shape[0] < g.shape[1]:
            return False
        s = np.linalg.svd(g, compute_uv=False)
        return bool(s[-1] > 1e-12 * max(1.0, s[0]))


@dataclass(frozen=True)
class EvolutionTriple:
    """Discrete model of {X, H, X*} with inclusion maps.

    mass   -- SPD matrix of the H inner product on coefficient vectors.
    t_map  -- matrix of the inclusion X -> H (must be injective).
    xnorm  -- descriptor of the X-norm.
    """

    dim: int
    mass: np.ndarray
    xnorm: XNorm = field(default_factory=XNorm)
    t_map: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be a positive integer")
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != (self.dim, self.dim):
            raise ValueError(f"mass must be {self.dim}x{self.dim}, got {mass.shape}")
        if not np.allclose(mass, mass.T, rtol=0.0, atol=1e-12 * _scale(mass)):
            raise ValueError("mass matrix must be symmetric")
        eigs = np.linalg.eigvalsh(mass)
        if eigs[0] <= _SPD_TOL * max(1.0, eigs[-1]):
            raise ValueError("mass matrix must be positive definite")
        object.__setattr__(self, "mass", mass)
        t_map = self.t_map
        if t_map is None:
            t_map = np.eye(self.dim)
        else:
            t_map = np.asarray(t_map, dtype=float)
            if t_map.shape != (self.dim, self.dim):
                raise ValueError("t_map must be square of size dim")
            s = np.linalg.svd(t_map, compute_uv=False)
            if s[-1] <= 1e-12 * max(1.0, s[0]):
                raise ValueError("t_map must be injective")
        object.__setattr__(self, "t_map", t_map)
        object.__setattr__(self, "_inclusion", np.ascontiguousarray(t_map.T @ mass @ t_map))

    # -- inner products and inclusions ------------------------------------

    def h_inner(self, w1: np.ndarray, w2: np.ndarray) -> float:
        """H inner product <w1, w2>_H = w1^T mass w2."""
        w1 = self._vec(w1)
        w2 = self._vec(w2)
        return float(w1 @ self.mass @ w2)

    def h_norm(self, w: np.ndarray) -> float:
        return float(np.sqrt(max(self.h_inner(w, w), 0.0)))

    def apply_t(self, x: np.ndarray) -> np.ndarray:
        """Inclusion X -> H."""
        return self.t_map @ self._vec(x)

    def apply_t_adjoint(self, w: np.ndarray) -> np.ndarray:
        """Adjoint inclusion H -> X*, defined by <x, Tt w> = <T x, w>_H."""
        return self.t_map.T @ (self.mass @ self._vec(w))

    def apply_inclusions(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (T x, I x) with I = Tt o T."""
        tx = self.apply_t(x)
        return tx, self.t_map.T @ (self.mass @ tx)

    def apply_i(self, x: np.ndarray) -> np.ndarray:
        return self.apply_inclusions(x)[1]

    @property
    def inclusion_matrix(self) -> np.ndarray:
        """Dense matrix of I = t_map^T mass t_map (symmetric positive definite)."""
        return self._inclusion

    def x_representative(self, w: np.ndarray) -> np.ndarray:
        """Solve T x = w for the coefficient vector x."""
        return np.linalg.solve(self.t_map, self._vec(w))

    # -- norms -------------------------------------------------------------

    def x_norm(self, x: np.ndarray) -> float:
        x = self._vec(x)
        if self.xnorm.kind == "euclidean":
            return float(np.linalg.norm(x))
        gx = self.xnorm.matrix @ x
        q = self.xnorm.q
        return float(np.sum(np.abs(gx) ** q) ** (1.0 / q))

    def _vec(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got shape {v.shape}")
        return v


def pairing(x: np.ndarray, f: np.ndarray) -> float:
    """Duality pairing <x, f>_{X x X*}: Euclidean dot product of coefficients."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    if x.shape != f.shape or x.ndim != 1:
        raise ValueError(f"pairing needs two vectors of equal length, got {x.shape} and {f.shape}")
    return float(x @ f)


def _scale(a: np.ndarray) -> float:
    m = float(np.max(np.abs(a))) if a.size else 0.0
    return max(m, 1.0)

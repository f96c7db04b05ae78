"""Desk-scale instantiations of the supported equation classes.

All builders return a ProblemSpec whose components satisfy the standing
structural hypotheses discretely: convex potentials with the stated
growth, operators whose monotone parts are genuinely monotone and whose
skew parts pair to zero against their argument exactly (not just to
truncation error).  1D Dirichlet grids for the parabolic, hyperbolic and
Schrodinger-type families; a 2D periodic divergence-free spectral basis
for Navier-Stokes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .operator import OperatorLambda
from .potential import Potential
from .problem import ProblemSpec
from .trajectory import Trajectory
from .triple import EvolutionTriple, XNorm

__all__ = [
    "PointwiseMap",
    "build_scalar_decay",
    "build_parabolic_divergence",
    "build_heat",
    "build_heat_core",
    "build_parabolic_nondivergence",
    "build_hyperbolic",
    "build_schrodinger",
    "build_navier_stokes_2d",
    "build_anticoercive_fixture",
    "exact_heat_solution",
    "taylor_green_rate",
    "StreamFunctionBasis",
]


@dataclass(frozen=True)
class PointwiseMap:
    """A scalar map applied componentwise, with its derivative (both vectorized)."""

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray]

    @classmethod
    def linear(cls, c: float) -> "PointwiseMap":
        return cls(lambda v: c * v, lambda v: np.full_like(v, c))

    @classmethod
    def saturated_cubic(cls, c: float) -> "PointwiseMap":
        """c * v^3 / (1 + v^2): cubic near zero, globally Lipschitz."""
        return cls(
            lambda v: c * v**3 / (1.0 + v**2),
            lambda v: c * v**2 * (3.0 + v**2) / (1.0 + v**2) ** 2,
        )

    @classmethod
    def arctan(cls, c: float) -> "PointwiseMap":
        """Monotone saturated map c * arctan(v)."""
        return cls(lambda v: c * np.arctan(v), lambda v: c / (1.0 + v**2))


_ZERO_MAP = PointwiseMap(lambda v: np.zeros_like(v), lambda v: np.zeros_like(v))


# -- 1D grid pieces ---------------------------------------------------------

def _difference_matrix(n: int) -> np.ndarray:
    """(n+1) x n forward differences of interior values with zero boundary."""
    d = np.zeros((n + 1, n))
    idx = np.arange(n)
    d[idx, idx] = 1.0
    d[idx + 1, idx] = -1.0
    return d


def _grid(n: int) -> tuple[float, np.ndarray]:
    h = 1.0 / (n + 1)
    return h, h * np.arange(1, n + 1)


def _default_bump(x: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * x)


# -- scalar fixtures ---------------------------------------------------------

def build_scalar_decay(t1: float = 1.0, u0: float = 1.0) -> ProblemSpec:
    """du/dt + u + u = 0 in disguise: Lambda(u) = u, Psi = u^2/2, lambda = 1."""
    triple = EvolutionTriple(dim=1, mass=np.eye(1))
    potential = Potential.quadratic(np.eye(1))
    lam_op = OperatorLambda(
        dim=1,
        eval=lambda t, x: x.copy(),
        dderiv=lambda t, x, h: h.copy(),
        dderiv_adjoint=lambda t, x, v: v.copy(),
        jacobian=lambda t, x: np.eye(1),
        kind_tag="linear",
    )
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.array([u0]),
        metadata={"name": "scalar_decay", "grid": "scalar", "bc": "none"},
    )


def build_anticoercive_fixture(t1: float = 1.0) -> ProblemSpec:
    """Lambda(u) = -u^3 against Psi = u^4/4: the positivity condition fails."""
    triple = EvolutionTriple(
        dim=1, mass=np.eye(1), xnorm=XNorm(kind="power", matrix=np.eye(1), q=4.0)
    )
    potential = Potential.pointwise_power(q=4.0, dim=1)
    lam_op = OperatorLambda(
        dim=1,
        eval=lambda t, x: -x**3,
        dderiv=lambda t, x, h: -3.0 * x**2 * h,
        dderiv_adjoint=lambda t, x, v: -3.0 * x**2 * v,
        jacobian=lambda t, x: np.diag(-3.0 * x**2),
        kind_tag="semilinear",
    )
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.array([1.0]),
        metadata={"name": "anticoercive_fixture", "grid": "scalar", "bc": "none"},
    )


# -- parabolic, divergence form ----------------------------------------------

def build_parabolic_divergence(
    n: int,
    q: float = 2.0,
    theta: Optional[PointwiseMap] = None,
    xi: Optional[PointwiseMap] = None,
    gamma: Optional[PointwiseMap] = None,
    t1: float = 0.1,
    initial: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    time_scale: Optional[float] = None,
    name: str = "parabolic_divergence",
) -> ProblemSpec:
    """du/dt = Theta(u) + d/dx Xi(u) + d/dx Gamma(u') + d/dx phi'(u') on (0,1).

    Dirichlet grid with n interior nodes; the potential is the W^{1,q}
    Dirichlet energy (1/q) * h * ||G u||_q^q with G the scaled difference
    matrix, so phi'(s) = |s|^{q-1} sgn s.  gamma must be monotone for the
    operator's monotonicity hypothesis to hold.
    """
    if n < 3:
        raise ValueError("need at least 3 interior points")
    if q < 2.0:
        raise ValueError("q must be >= 2")
    theta = theta or _ZERO_MAP
    xi = xi or _ZERO_MAP
    gamma = gamma or _ZERO_MAP
    h, x_nodes = _grid(n)
    g_mat = _difference_matrix(n) / h
    avg = np.abs(_difference_matrix(n)) / 2.0        # node values -> cell midpoints
    triple = EvolutionTriple(
        dim=n,
        mass=h * np.eye(n),
        xnorm=XNorm(kind="power", matrix=h ** (1.0 / q) * g_mat, q=q),
    )
    modulation = None if time_scale is None else (lambda t, c=time_scale: 1.0 + c * t)
    potential = Potential.composed_power(g_mat, q=q, scale=h, modulation=modulation)

    def lam_eval(t, x):
        return h * (g_mat.T @ gamma.value(g_mat @ x)
                    + g_mat.T @ xi.value(avg @ x)
                    - theta.value(x))

    def lam_dderiv(t, x, hh):
        return h * (g_mat.T @ (gamma.deriv(g_mat @ x) * (g_mat @ hh))
                    + g_mat.T @ (xi.deriv(avg @ x) * (avg @ hh))
                    - theta.deriv(x) * hh)

    def lam_adjoint(t, x, v):
        gv = g_mat @ v
        return h * (g_mat.T @ (gamma.deriv(g_mat @ x) * gv)
                    + avg.T @ (xi.deriv(avg @ x) * gv)
                    - theta.deriv(x) * v)

    def lam_jac(t, x):
        return h * (g_mat.T @ (gamma.deriv(g_mat @ x)[:, None] * g_mat)
                    + g_mat.T @ (xi.deriv(avg @ x)[:, None] * avg)
                    - np.diag(theta.deriv(x)))

    kind = "linear" if (theta is _ZERO_MAP and xi is _ZERO_MAP and gamma is _ZERO_MAP) \
        else "quasilinear"
    lam_op = OperatorLambda(dim=n, eval=lam_eval, dderiv=lam_dderiv,
                            dderiv_adjoint=lam_adjoint, jacobian=lam_jac, kind_tag=kind)
    u0 = (initial or _default_bump)(x_nodes)
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.asarray(u0, dtype=float),
        metadata={"name": name, "grid": f"1d-dirichlet-n{n}", "bc": "dirichlet", "q": q},
    )


def build_heat(n: int, t1: float = 0.1,
               initial: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> ProblemSpec:
    """The q = 2 divergence-form problem with no lower-order terms."""
    return build_parabolic_divergence(n, q=2.0, t1=t1, initial=initial, name="heat")


# -- parabolic, non-divergence form -------------------------------------------

def build_parabolic_nondivergence(
    n: int,
    q: float = 2.0,
    gamma: Optional[PointwiseMap] = None,
    theta: Optional[Callable] = None,
    theta_derivs: Optional[tuple[Callable, Callable]] = None,
    t1: float = 0.1,
    initial: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ProblemSpec:
    """Second-order quasilinear flow driven through the discrete Laplacian.

    The state lives in the W^{1,2} Dirichlet geometry (stiffness + mass
    inner product) and the potential acts on Delta_h u, giving a
    biharmonic-type flow for q = 2 and no lower-order terms.  gamma is a
    monotone map of Delta_h u; theta(slope, value) is a Lipschitz map of
    (u', u) with partial derivatives theta_derivs.
    """
    if n < 3:
        raise ValueError("need at least 3 interior points for a 3-point Laplacian")
    gamma = gamma or _ZERO_MAP
    h, x_nodes = _grid(n)
    g_mat = _difference_matrix(n) / h
    lap = -(g_mat.T @ g_mat)                      # 3-point Dirichlet Laplacian
    cen = np.zeros((n, n))                        # centered slopes at nodes
    idx = np.arange(n)
    cen[idx[:-1], idx[:-1] + 1] += 1.0 / (2 * h)
    cen[idx[1:], idx[1:] - 1] -= 1.0 / (2 * h)
    triple = EvolutionTriple(
        dim=n,
        mass=h * (g_mat.T @ g_mat + np.eye(n)),
        xnorm=XNorm(kind="power", matrix=h ** (1.0 / q) * lap, q=q),
    )
    potential = Potential.composed_power(lap, q=q, scale=h)

    if theta is None:
        theta_fn = lambda s, v: np.zeros_like(v)
        dth_s = lambda s, v: np.zeros_like(v)
        dth_v = lambda s, v: np.zeros_like(v)
    else:
        theta_fn = theta
        dth_s, dth_v = theta_derivs

    def lam_eval(t, x):
        return h * (lap.T @ (gamma.value(lap @ x) + theta_fn(cen @ x, x)))

    def lam_dderiv(t, x, hh):
        s = cen @ x
        return h * (lap.T @ (gamma.deriv(lap @ x) * (lap @ hh)
                             + dth_s(s, x) * (cen @ hh) + dth_v(s, x) * hh))

    def lam_adjoint(t, x, v):
        s = cen @ x
        lv = lap @ v
        return h * (lap.T @ (gamma.deriv(lap @ x) * lv)
                    + cen.T @ (dth_s(s, x) * lv) + dth_v(s, x) * lv)

    def lam_jac(t, x):
        s = cen @ x
        return h * (lap.T @ (gamma.deriv(lap @ x)[:, None] * lap)
                    + lap.T @ (dth_s(s, x)[:, None] * cen)
                    + lap.T @ np.diag(dth_v(s, x)))

    kind = "linear" if (gamma is _ZERO_MAP and theta is None) else "quasilinear"
    lam_op = OperatorLambda(dim=n, eval=lam_eval, dderiv=lam_dderiv,
                            dderiv_adjoint=lam_adjoint, jacobian=lam_jac, kind_tag=kind)
    u0 = (initial or _default_bump)(x_nodes)
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.asarray(u0, dtype=float),
        metadata={"name": "parabolic_nondivergence", "grid": f"1d-dirichlet-n{n}",
                  "bc": "dirichlet", "q": q},
    )


# -- hyperbolic, first-order block form ----------------------------------------

def build_hyperbolic(
    n: int,
    damping: float = 0.0,
    nonlinearity: float = 0.0,
    psi_weight: float = 0.05,
    t1: float = 1.0,
    initial_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    initial_v: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ProblemSpec:
    """Second-order wave dynamics as the block system on z = (u, v):

        du/dt + v + damping * u = 0
        dv/dt + Delta_h u - Theta(u) = 0,   Theta = saturated cubic

    The pair geometry is stiffness x L2, under which the principal block
    is exactly skew; the potential is a small multiple of the squared
    H-norm so the variational energy stays finite off solutions.
    """
    if n < 3:
        raise ValueError("need at least 3 interior points")
    h, x_nodes = _grid(n)
    g_mat = _difference_matrix(n) / h
    stiff = h * (g_mat.T @ g_mat)
    lap = -(g_mat.T @ g_mat)
    theta = PointwiseMap.saturated_cubic(nonlinearity)
    dim = 2 * n
    mass = np.zeros((dim, dim))
    mass[:n, :n] = stiff
    mass[n:, n:] = h * np.eye(n)
    gx = np.zeros((2 * n + 1, dim))
    gx[:n, :n] = np.sqrt(h) * lap
    gx[n:, n:] = np.sqrt(h) * g_mat
    triple = EvolutionTriple(dim=dim, mass=mass, xnorm=XNorm(kind="power", matrix=gx, q=2.0))
    potential = Potential.quadratic(psi_weight * mass)

    def split(z):
        return z[:n], z[n:]

    def lam_eval(t, z):
        u, v = split(z)
        out = np.empty(dim)
        out[:n] = stiff @ (v + damping * u)
        out[n:] = h * (lap @ u - theta.value(u))
        return out

    def lam_dderiv(t, z, hh):
        u, _ = split(z)
        hu, hv = split(hh)
        out = np.empty(dim)
        out[:n] = stiff @ (hv + damping * hu)
        out[n:] = h * (lap @ hu - theta.deriv(u) * hu)
        return out

    def lam_adjoint(t, z, w):
        u, _ = split(z)
        wu, wv = split(w)
        out = np.empty(dim)
        out[:n] = damping * (stiff @ wu) + h * (lap.T @ wv - theta.deriv(u) * wv)
        out[n:] = stiff @ wu
        return out

    def lam_jac(t, z):
        u, _ = split(z)
        jac = np.zeros((dim, dim))
        jac[:n, :n] = damping * stiff
        jac[:n, n:] = stiff
        jac[n:, :n] = h * (lap - np.diag(theta.deriv(u)))
        return jac

    tag = "skew" if (damping == 0.0 and nonlinearity == 0.0) else "semilinear"
    lam_op = OperatorLambda(dim=dim, eval=lam_eval, dderiv=lam_dderiv,
                            dderiv_adjoint=lam_adjoint, jacobian=lam_jac, kind_tag=tag)
    u0 = (initial_u or _default_bump)(x_nodes)
    v0 = initial_v(x_nodes) if initial_v is not None else np.zeros(n)
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.concatenate([u0, v0]),
        metadata={"name": "hyperbolic", "grid": f"1d-dirichlet-n{n}", "bc": "dirichlet",
                  "q": 2.0},
    )


# -- Schrodinger-type block system ---------------------------------------------

def build_schrodinger(
    n: int,
    couplings: tuple[float, float] = (0.0, 0.0),
    psi_weight: float = 0.05,
    t1: float = 1.0,
    initial_u: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    initial_v: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> ProblemSpec:
    """Coupled pair with skew Laplacian coupling:

        du/dt - Delta_h v + Theta(u, v) = 0
        dv/dt + Delta_h u + Xi(u, v) = 0

    Theta and Xi are saturated-cubic maps of u resp. v with strengths
    couplings = (c_theta, c_xi).  Both components live in the W^{1,2}
    geometry (stiffness + mass); the skew coupling pairs to zero exactly.
    """
    if n < 3:
        raise ValueError("need at least 3 interior points")
    h, x_nodes = _grid(n)
    g_mat = _difference_matrix(n) / h
    lap = -(g_mat.T @ g_mat)
    w_mat = h * (g_mat.T @ g_mat + np.eye(n))   # stiffness + mass
    theta = PointwiseMap.saturated_cubic(couplings[0])
    xi = PointwiseMap.saturated_cubic(couplings[1])
    dim = 2 * n
    mass = np.zeros((dim, dim))
    mass[:n, :n] = w_mat
    mass[n:, n:] = w_mat
    gx = np.zeros((dim, dim))
    gx[:n, :n] = np.sqrt(h) * lap
    gx[n:, n:] = np.sqrt(h) * lap
    triple = EvolutionTriple(dim=dim, mass=mass, xnorm=XNorm(kind="power", matrix=gx, q=2.0))
    potential = Potential.quadratic(psi_weight * mass)

    def split(z):
        return z[:n], z[n:]

    def lam_eval(t, z):
        u, v = split(z)
        out = np.empty(dim)
        out[:n] = w_mat @ (-(lap @ v) + theta.value(u))
        out[n:] = w_mat @ ((lap @ u) + xi.value(v))
        return out

    def lam_dderiv(t, z, hh):
        u, v = split(z)
        hu, hv = split(hh)
        out = np.empty(dim)
        out[:n] = w_mat @ (-(lap @ hv) + theta.deriv(u) * hu)
        out[n:] = w_mat @ ((lap @ hu) + xi.deriv(v) * hv)
        return out

    def lam_adjoint(t, z, w):
        u, v = split(z)
        wu, wv = split(w)
        out = np.empty(dim)
        out[:n] = theta.deriv(u) * (w_mat @ wu) + lap.T @ (w_mat @ wv)
        out[n:] = -(lap.T @ (w_mat @ wu)) + xi.deriv(v) * (w_mat @ wv)
        return out

    def lam_jac(t, z):
        u, v = split(z)
        jac = np.zeros((dim, dim))
        jac[:n, :n] = w_mat @ np.diag(theta.deriv(u))
        jac[:n, n:] = -(w_mat @ lap)
        jac[n:, :n] = w_mat @ lap
        jac[n:, n:] = w_mat @ np.diag(xi.deriv(v))
        return jac

    tag = "skew" if couplings == (0.0, 0.0) else "semilinear"
    lam_op = OperatorLambda(dim=dim, eval=lam_eval, dderiv=lam_dderiv,
                            dderiv_adjoint=lam_adjoint, jacobian=lam_jac, kind_tag=tag)
    u0 = (initial_u or _default_bump)(x_nodes)
    v0 = initial_v(x_nodes) if initial_v is not None else np.zeros(n)
    return ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=np.concatenate([u0, v0]),
        metadata={"name": "schrodinger", "grid": f"1d-dirichlet-n{n}", "bc": "dirichlet",
                  "q": 2.0},
    )


# -- 2D incompressible Navier-Stokes -------------------------------------------

class StreamFunctionBasis:
    """Real divergence-free velocity basis on a k x k periodic grid.

    Every state is the coefficient vector of a real stream function over
    the resolved modes max(|m1|, |m2|) <= k/2 - 1 (mean and Nyquist modes
    excluded).  Velocities are perpendicular gradients, so divergence
    vanishes by construction; quadratic products are evaluated on a 2k
    zero-padded grid, which makes the projected convection an exact
    Galerkin convolution and its pairing against the state exactly zero.
    """

    def __init__(self, k: int):
        if k < 8 or k % 2:
            raise ValueError("grid size k must be even and at least 8")
        self.k = k
        self.kmax = k // 2 - 1
        kk = self.kmax
        modes = [(m1, 0) for m1 in range(1, kk + 1)]
        modes += [(m1, m2) for m2 in range(1, kk + 1) for m1 in range(-kk, kk + 1)]
        self.modes = np.array(modes)                       # (P, 2)
        self.nmodes = len(modes)
        self.dim = 2 * self.nmodes                         # cos and sin amplitudes
        self.msq = (self.modes[:, 0] ** 2 + self.modes[:, 1] ** 2).astype(float)
        self.pad = 2 * k
        p = self.pad
        self._ix = np.mod(self.modes[:, 0], p)
        self._iy = np.mod(self.modes[:, 1], p)
        self._ix_neg = np.mod(-self.modes[:, 0], p)
        self._iy_neg = np.mod(-self.modes[:, 1], p)
        wave = np.fft.fftfreq(p, d=1.0 / p)
        self.wx = wave[:, None]                            # m1 varies along axis 0
        self.wy = wave[None, :]
        area = (2.0 * np.pi) ** 2
        self.mass_diag = np.concatenate([self.msq, self.msq]) * area / 2.0
        self.stiff_diag = np.concatenate([self.msq**2, self.msq**2]) * area / 2.0
        self._kernel_cache = None

    # spectral plumbing ------------------------------------------------------

    def _spectral(self, x: np.ndarray) -> np.ndarray:
        """Coefficients -> complex stream spectrum on the padded lattice."""
        c = 0.5 * (x[: self.nmodes] - 1j * x[self.nmodes:])
        z = np.zeros((self.pad, self.pad), dtype=complex)
        z[self._ix, self._iy] = c
        z[self._ix_neg, self._iy_neg] = np.conj(c)
        return z

    def _field(self, z: np.ndarray) -> np.ndarray:
        return np.real(np.fft.ifft2(z)) * (self.pad**2)

    def velocity(self, x: np.ndarray, grid: Optional[int] = None) -> np.ndarray:
        """Velocity components on the padded (or a given) grid."""
        z = self._spectral(x)
        u1 = self._field(1j * self.wy * z)
        u2 = self._field(-1j * self.wx * z)
        vel = np.stack([u1, u2])
        if grid is not None and grid != self.pad:
            step = self.pad // grid
            if step * grid != self.pad:
                raise ValueError("grid must divide the padded size")
            vel = vel[:, ::step, ::step]
        return vel

    def project_dual(self, w1: np.ndarray, w2: np.ndarray) -> np.ndarray:
        """Dual coefficients of a velocity field: integrals against basis fields."""
        area = (2.0 * np.pi) ** 2
        f1 = np.fft.fft2(w1) / (self.pad**2)
        f2 = np.fft.fft2(w2) / (self.pad**2)
        m1 = self.modes[:, 0]
        m2 = self.modes[:, 1]
        a = area * (m2 * f1[self._ix, self._iy].imag - m1 * f2[self._ix, self._iy].imag)
        b = area * (m2 * f1[self._ix, self._iy].real - m1 * f2[self._ix, self._iy].real)
        return np.concatenate([a, b])

    def _velocity_and_grad(self, x: np.ndarray):
        z = self._spectral(x)
        zx = 1j * self.wx * z
        zy = 1j * self.wy * z
        u1 = self._field(zy)
        u2 = self._field(-zx)
        du1 = (self._field(1j * self.wx * zy), self._field(1j * self.wy * zy))
        du2 = (self._field(-1j * self.wx * zx), self._field(-1j * self.wy * zx))
        return (u1, u2), (du1, du2)

    def convection_dual(self, x: np.ndarray) -> np.ndarray:
        """Dual coefficients of (u . grad) u, dealiased exactly by padding."""
        (u1, u2), (du1, du2) = self._velocity_and_grad(x)
        w1 = u1 * du1[0] + u2 * du1[1]
        w2 = u1 * du2[0] + u2 * du2[1]
        return self.project_dual(w1, w2)

    def convection_dual_linearized(self, x: np.ndarray, h: np.ndarray) -> np.ndarray:
        (u1, u2), (du1, du2) = self._velocity_and_grad(x)
        (h1, h2), (dh1, dh2) = self._velocity_and_grad(h)
        w1 = u1 * dh1[0] + u2 * dh1[1] + h1 * du1[0] + h2 * du1[1]
        w2 = u1 * dh2[0] + u2 * dh2[1] + h1 * du2[0] + h2 * du2[1]
        return self.project_dual(w1, w2)

    def convection_jacobian(self, x: np.ndarray) -> np.ndarray:
        """Dense Jacobian of the projected convection via its spectral kernel.

        For trig-polynomial states the linearized convection couples test
        mode nu and perturbation mode mu only through the stream
        coefficients at nu -/+ mu:

            dual(nu) = sum_mu (2 pi)^2 s(nu, mu) (2 nu.mu -/+ |nu|^2)
                       psihat_{nu -/+ mu} phihat_{+/-mu},
            s(nu, mu) = nu_1 mu_2 - nu_2 mu_1,

        so the whole matrix is one gather over mode differences and sums.
        No FFT enters: this is exactly the Galerkin truncation, assembled
        in O(dim^2).
        """
        if self._kernel_cache is None:
            m1 = self.modes[:, 0]
            m2 = self.modes[:, 1]
            two_k = 2 * self.kmax
            dxm = m1[:, None] - m1[None, :] + two_k
            dym = m2[:, None] - m2[None, :] + two_k
            sxm = m1[:, None] + m1[None, :] + two_k
            sym = m2[:, None] + m2[None, :] + two_k
            s_ij = (m1[:, None] * m2[None, :] - m2[:, None] * m1[None, :]).astype(float)
            d_ij = (m1[:, None] * m1[None, :] + m2[:, None] * m2[None, :]).astype(float)
            self._kernel_cache = (dxm, dym, sxm, sym, s_ij, d_ij)
        dxm, dym, sxm, sym, s_ij, d_ij = self._kernel_cache
        area = (2.0 * np.pi) ** 2
        two_k = 2 * self.kmax
        size = 2 * two_k + 1
        centered = np.zeros((size, size), dtype=complex)
        c = 0.5 * (x[: self.nmodes] - 1j * x[self.nmodes:])
        centered[self.modes[:, 0] + two_k, self.modes[:, 1] + two_k] = c
        centered[-self.modes[:, 0] + two_k, -self.modes[:, 1] + two_k] = np.conj(c)
        p_ij = centered[dxm, dym]              # psihat at nu_i - mu_j
        q_ij = centered[sxm, sym]              # psihat at nu_i + mu_j
        n_i = self.msq[:, None]
        kp = area * s_ij * (2.0 * d_ij - n_i) * p_ij
        km = area * s_ij * (2.0 * d_ij + n_i) * q_ij
        da = 0.5 * (kp + km)                   # response to a unit cos amplitude
        db = 0.5j * (km - kp)                  # response to a unit sin amplitude
        jac = np.empty((self.dim, self.dim))
        jac[: self.nmodes, : self.nmodes] = da.real
        jac[self.nmodes:, : self.nmodes] = -da.imag
        jac[: self.nmodes, self.nmodes:] = db.real
        jac[self.nmodes:, self.nmodes:] = -db.imag
        return jac

    def convection_jacobian_fft(self, x: np.ndarray, chunk: int = 64) -> np.ndarray:
        """FFT route to the same Jacobian, column batches; kept as a cross-check."""
        (u1, u2), (du1, du2) = self._velocity_and_grad(x)
        p = self.pad
        area = (2.0 * np.pi) ** 2
        jac = np.empty((self.dim, self.dim))
        m1 = self.modes[:, 0]
        m2 = self.modes[:, 1]
        for start in range(0, self.dim, chunk):
            cols = range(start, min(start + chunk, self.dim))
            zs = np.zeros((len(cols), p, p), dtype=complex)
            for row, j in enumerate(cols):
                mode = j % self.nmodes
                amp = 0.5 if j < self.nmodes else -0.5j
                zs[row, self._ix[mode], self._iy[mode]] = amp
                zs[row, self._ix_neg[mode], self._iy_neg[mode]] = np.conj(amp)
            zx = 1j * self.wx * zs
            zy = 1j * self.wy * zs
            h1 = np.real(np.fft.ifft2(zy)) * p**2
            h2 = np.real(np.fft.ifft2(-zx)) * p**2
            dh1x = np.real(np.fft.ifft2(1j * self.wx * zy)) * p**2
            dh1y = np.real(np.fft.ifft2(1j * self.wy * zy)) * p**2
            dh2x = np.real(np.fft.ifft2(-1j * self.wx * zx)) * p**2
            dh2y = np.real(np.fft.ifft2(-1j * self.wy * zx)) * p**2
            w1 = u1 * dh1x + u2 * dh1y + h1 * du1[0] + h2 * du1[1]
            w2 = u1 * dh2x + u2 * dh2y + h1 * du2[0] + h2 * du2[1]
            f1 = np.fft.fft2(w1) / p**2
            f2 = np.fft.fft2(w2) / p**2
            sel1 = f1[:, self._ix, self._iy]
            sel2 = f2[:, self._ix, self._iy]
            a = area * (m2 * sel1.imag - m1 * sel2.imag)
            b = area * (m2 * sel1.real - m1 * sel2.real)
            jac[:, list(cols)] = np.concatenate([a, b], axis=1).T
        return jac

    def divergence_max(self, x: np.ndarray) -> float:
        z = self._spectral(x)
        div = self._field(1j * self.wx * (1j * self.wy * z)
                          + 1j * self.wy * (-1j * self.wx * z))
        return float(np.max(np.abs(div)))

    def project_stream(self, psi_grid: np.ndarray) -> np.ndarray:
        """Coefficients of a stream function sampled on the k x k grid."""
        if psi_grid.shape != (self.k, self.k):
            raise ValueError(f"stream function must be sampled on a {self.k} x {self.k} grid")
        zz = np.fft.fft2(psi_grid) / (self.k**2)
        ix = np.mod(self.modes[:, 0], self.k)
        iy = np.mod(self.modes[:, 1], self.k)
        sel = zz[ix, iy]
        return np.concatenate([2.0 * sel.real, -2.0 * sel.imag])

    def grid_points(self) -> tuple[np.ndarray, np.ndarray]:
        pts = 2.0 * np.pi * np.arange(self.k) / self.k
        return np.meshgrid(pts, pts, indexing="ij")

    def kinetic_energy(self, x: np.ndarray) -> float:
        return 0.5 * float(x @ (self.mass_diag * x))


def taylor_green_stream(basis: StreamFunctionBasis) -> np.ndarray:
    xx, yy = basis.grid_points()
    return basis.project_stream(np.sin(xx) * np.sin(yy))


def taylor_green_rate(viscosity: float) -> float:
    """Analytic decay rate of the kinetic energy of the (1,1) vortex: 2 nu |m|^2."""
    return 2.0 * viscosity * 2.0


def build_navier_stokes_2d(
    k: int,
    viscosity: float = 0.1,
    forcing: Optional[np.ndarray] = None,
    t1: float = 1.0,
    initial: str | np.ndarray = "taylor-green",
    seed: int = 0,
) -> ProblemSpec:
    """Incompressible 2D flow on the periodic square in a div-free basis.

    The evolution is du/dt + P(u . grad u) - f + nu * (-Laplace) u = 0 with
    the viscous term entering through the quadratic potential
    Psi(u) = (nu/2) * ||grad u||^2.  forcing, when given, is a (2, k, k)
    array of velocity-space components sampled on the grid.
    """
    basis = StreamFunctionBasis(k)
    n = basis.dim
    triple = EvolutionTriple(
        dim=n,
        mass=np.diag(basis.mass_diag),
        xnorm=XNorm(kind="power",
                    matrix=np.diag(np.sqrt(basis.stiff_diag)), q=2.0),
    )
    potential = Potential.quadratic(viscosity * np.diag(basis.stiff_diag))
    if forcing is not None:
        forcing = np.asarray(forcing, dtype=float)
        if forcing.shape != (2, k, k):
            raise ValueError(f"forcing must have shape (2, {k}, {k})")
        # re-expand the sampled field spectrally onto the padded grid before projecting
        half = k // 2
        sel_k = np.mod(np.r_[0:half, -half:0], k)
        sel_p = np.mod(np.r_[0:half, -half:0], basis.pad)
        w = []
        for comp in forcing:
            spec_k = np.fft.fft2(comp) / k**2
            spec_p = np.zeros((basis.pad, basis.pad), dtype=complex)
            spec_p[np.ix_(sel_p, sel_p)] = spec_k[np.ix_(sel_k, sel_k)]
            w.append(np.real(np.fft.ifft2(spec_p)) * basis.pad**2)
        f_dual = basis.project_dual(w[0], w[1])
    else:
        f_dual = np.zeros(n)

    def lam_eval(t, x):
        return basis.convection_dual(x) - f_dual

    def lam_dderiv(t, x, h):
        return basis.convection_dual_linearized(x, h)

    def lam_jac(t, x):
        return basis.convection_jacobian(x)

    lam_op = OperatorLambda(dim=n, eval=lam_eval, dderiv=lam_dderiv,
                            jacobian=lam_jac, kind_tag="convective")
    if isinstance(initial, str):
        if initial == "taylor-green":
            w0 = taylor_green_stream(basis)
        elif initial == "random":
            rng = np.random.default_rng(seed)
            w0 = np.zeros(n)
            low = basis.msq <= 8.0
            w0[: basis.nmodes][low] = rng.standard_normal(int(np.sum(low))) / 4.0
            w0[basis.nmodes:][low] = rng.standard_normal(int(np.sum(low))) / 4.0
        else:
            raise ValueError(f"unknown initial condition {initial!r}")
    else:
        w0 = np.asarray(initial, dtype=float)
        if w0.shape != (n,):
            raise ValueError(f"initial coefficient vector must have length {n}")
    prob = ProblemSpec(
        triple=triple, potential=potential, lambda_op=lam_op, lambda_flag=1,
        horizon=(0.0, t1), initial=w0,
        metadata={"name": "navier_stokes_2d", "grid": f"periodic-{k}x{k}",
                  "bc": "periodic", "q": 2.0, "viscosity": viscosity,
                  "_basis": None},
    )
    prob.metadata["_basis"] = basis
    return prob


def build_heat_core(n: int, t1: float = 0.1,
                    initial: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> ProblemSpec:
    """The heat dynamics carried entirely by the operator (lambda_flag 0).

    Diffusion enters as the linear map u -> h G^T G u; the attached
    potential only supplies the merit function for the lambda = 0 energy
    (its conjugate of the residual) and the regularizer family for the
    vanishing-potential continuation.
    """
    if n < 3:
        raise ValueError("need at least 3 interior points")
    h, x_nodes = _grid(n)
    g_mat = _difference_matrix(n) / h
    mass = h * np.eye(n)
    triple = EvolutionTriple(
        dim=n, mass=mass,
        xnorm=XNorm(kind="power", matrix=np.sqrt(h) * g_mat, q=2.0),
    )
    stiffness = h * (g_mat.T @ g_mat)
    lam_op = OperatorLambda(
        dim=n,
        eval=lambda t, x: stiffness @ x,
        dderiv=lambda t, x, hh: stiffness @ hh,
        dderiv_adjoint=lambda t, x, v: stiffness @ v,
        jacobian=lambda t, x: stiffness,
        kind_tag="linear",
    )
    u0 = (initial or _default_bump)(x_nodes)
    return ProblemSpec(
        triple=triple, potential=Potential.quadratic(mass), lambda_op=lam_op,
        lambda_flag=0, horizon=(0.0, t1), initial=np.asarray(u0, dtype=float),
        metadata={"name": "heat_core", "grid": f"1d-dirichlet-n{n}", "bc": "dirichlet",
                  "q": 2.0},
    )


# -- analytic references ---------------------------------------------------------

def exact_heat_solution(n: int, steps: int, t1: float = 0.1) -> Trajectory:
    """Samples of exp(-pi^2 t) sin(pi x) on the interior Dirichlet grid.

    States carry interior nodes only; the zero boundary values are implied
    by the Dirichlet representation and never stored.
    """
    _, x_nodes = _grid(n)
    times = np.linspace(0.0, t1, steps + 1)
    states = np.exp(-np.pi**2 * times)[:, None] * np.sin(np.pi * x_nodes)[None, :]
    return Trajectory(states, 0.0, t1, states[0].copy())

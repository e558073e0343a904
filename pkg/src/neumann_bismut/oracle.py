"""Independent ground truth for the Neumann semigroup P_t = e^{tL/2}.

Two families of solvers are provided.

* Image method on half-spaces (optionally with the Ornstein-Uhlenbeck drift
  Z = -Kx).  The normal coordinate of the reflected process is |Y| for the
  free process Y, so P_tf(x) = E f(m + sξ) with the normal component folded.
  Tangential axes use Gauss-Hermite nodes; the folded normal axis uses
  panel Gauss-Legendre on [0, |m_d| + 12 s].
* A conservative finite-volume Crank-Nicolson solver for the 1-D weighted
  operator ½ w^{-1}(w u')' with zero flux at both ends.  It covers the
  hemisphere (w = sin θ), the disk (w = r) and truncated half-lines
  (w = 1 or w = e^{-K x²/2}).  A few implicit Euler half-steps at the
  start (Rannacher smoothing) damp the stiff modes excited by data that
  does not satisfy the Neumann condition.

Derivatives are taken by Richardson-extrapolated finite differences for the
image method and from the solution spline for grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import solve_banded
from scipy.special import eval_legendre

from .functions import make_function
from .geometry import Disk, HalfSpace, Hemisphere


class OracleError(ValueError):
    pass


# Finite-difference steps below this are dominated by quadrature round-off.
MIN_STEP = 1e-4


def _richardson(fn, h):
    """Richardson extrapolation of a central-difference quantity with O(h²) error."""
    if not h >= MIN_STEP:
        raise OracleError(f"differentiation step {h!r} is below the resolution {MIN_STEP:g}")
    a = fn(h)
    b = fn(h / 2)
    return (4.0 * b - a) / 3.0


# ---------------------------------------------------------------------------
# image method


@dataclass
class ImageOracle:
    """Method of images on the half-space {x_d >= 0} with optional OU drift."""

    dim: int
    drift_K: float = 0.0
    n_hermite: int = 48
    n_panels: int = 12
    n_legendre: int = 24
    kind: str = "image_halfspace"
    _cache: dict = field(default_factory=dict, repr=False)

    def _moments(self, x, t):
        K = self.drift_K
        if K == 0.0:
            return np.asarray(x, float), math.sqrt(t)
        return np.exp(-0.5 * K * t) * np.asarray(x, float), math.sqrt(-math.expm1(-K * t) / K)

    def _hermite(self):
        if "gh" not in self._cache:
            z, w = np.polynomial.hermite.hermgauss(self.n_hermite)
            self._cache["gh"] = (math.sqrt(2.0) * z, w / math.sqrt(math.pi))
        return self._cache["gh"]

    def _legendre(self):
        if "gl" not in self._cache:
            self._cache["gl"] = np.polynomial.legendre.leggauss(self.n_legendre)
        return self._cache["gl"]

    def value(self, f, x, t):
        """P_t f at a single chart point x (or a stack of points)."""
        f = make_function(f, self.dim) if not callable(f) else f
        x = np.asarray(x, float)
        if x.ndim > 1:
            return np.array([self.value(f, xi, t) for xi in x])
        if t <= 0:
            return float(f(x[None])[0])
        m, s = self._moments(x, t)
        # normal axis: folded Gaussian density on [0, a]
        md = m[-1]
        a = abs(md) + 12.0 * s
        zl, wl = self._legendre()
        edges = np.linspace(0.0, a, self.n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        y = (mid[:, None] + half[:, None] * zl[None, :]).ravel()
        wy = (half[:, None] * wl[None, :]).ravel()
        dens = (np.exp(-0.5 * ((y - md) / s) ** 2) + np.exp(-0.5 * ((y + md) / s) ** 2)) / (
            s * math.sqrt(2 * math.pi)
        )
        wy = wy * dens
        if self.dim == 1:
            return float(np.sum(wy * f(y[:, None])))
        zh, wh = self._hermite()
        grids = [m[i] + s * zh for i in range(self.dim - 1)] + [y]
        weights = [wh] * (self.dim - 1) + [wy]
        mesh = np.meshgrid(*grids, indexing="ij")
        pts = np.stack(mesh, axis=-1)
        W = weights[0]
        for wi in weights[1:]:
            W = np.multiply.outer(W, wi)
        return float(np.sum(W * f(pts)))

    def grad(self, f, x, t, v, h=1e-2):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        return _richardson(lambda e: (self.value(f, x + e * v, t) - self.value(f, x - e * v, t)) / (2 * e), h)

    def hess(self, f, x, t, v, h=2e-2):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        c = self.value(f, x, t)
        return _richardson(
            lambda e: (self.value(f, x + e * v, t) - 2 * c + self.value(f, x - e * v, t)) / (e * e), h
        )

    def hess_matrix(self, f, x, t, h=2e-2):
        d = self.dim
        H = np.zeros((d, d))
        E = np.eye(d)
        for i in range(d):
            H[i, i] = self.hess(f, x, t, E[i], h)
        for i in range(d):
            for j in range(i + 1, d):
                q = self.hess(f, x, t, (E[i] + E[j]) / math.sqrt(2), h)
                H[i, j] = H[j, i] = q - 0.5 * (H[i, i] + H[j, j])
        return H

    def Lf(self, f, x, t, route="temporal", h=None):
        x = np.asarray(x, float)
        if route == "temporal":
            tau = h or min(1e-2, 0.25 * t)
            return _richardson(lambda e: (self.value(f, x, t + e) - self.value(f, x, t - e)) / e, tau)
        if route == "spatial":
            lap = sum(self.hess(f, x, t, e_i) for e_i in np.eye(self.dim))
            if self.drift_K:
                grad = np.array([self.grad(f, x, t, e_i) for e_i in np.eye(self.dim)])
                lap += float(np.dot(-self.drift_K * x, grad))
            return lap
        raise OracleError("route must be 'temporal' or 'spatial'")


# ---------------------------------------------------------------------------
# 1-D weighted Crank-Nicolson


class Grid1D:
    """Zero-flux finite-volume Crank-Nicolson solver on [0, L] for ½ w^{-1}(w u')'.

    Args:
        weight: Callable s ↦ w(s) >= 0.
        length: Domain length L.
        n_cells: Number of intervals (nodes = n_cells + 1).
        dt: Time step.
        rannacher: Number of initial implicit Euler half-step pairs.
    """

    def __init__(self, weight, length, n_cells=2000, dt=1e-3, rannacher=2):
        self.L = float(length)
        self.n = int(n_cells)
        self.h = self.L / self.n
        self.s = np.linspace(0.0, self.L, self.n + 1)
        self.dt = float(dt)
        self.rannacher = int(rannacher)
        h = self.h
        faces = np.concatenate([[0.0], 0.5 * (self.s[1:] + self.s[:-1]), [self.L]])
        zl, wl = np.polynomial.legendre.leggauss(6)
        a, b = faces[:-1], faces[1:]
        pts = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * zl[None, :]
        self.V = np.sum(0.5 * (b - a)[:, None] * wl[None, :] * weight(pts), axis=1)
        wf = weight(faces[1:-1]) / h  # face conductances
        n1 = self.n + 1
        # symmetric stiffness matrix S with (S u)_i = Σ fluxes; generator A = ½ V^{-1} S
        diag = np.zeros(n1)
        diag[:-1] -= wf
        diag[1:] -= wf
        self.S_diag = diag
        self.S_off = wf
        self._solutions = {}

    def _banded(self, c):
        """Banded form of V - c S."""
        n1 = self.n + 1
        ab = np.zeros((3, n1))
        ab[1] = self.V - c * self.S_diag
        ab[0, 1:] = -c * self.S_off
        ab[2, :-1] = -c * self.S_off
        return ab

    def _S_mul(self, u):
        out = self.S_diag * u
        out[:-1] += self.S_off * u[1:]
        out[1:] += self.S_off * u[:-1]
        return out

    def solve(self, u0, t_end, store=True):
        """Advance node values to t_end; returns the list of time slices."""
        n_t = max(1, int(math.ceil(t_end / self.dt - 1e-9)))
        tau = t_end / n_t
        ab_cn = self._banded(0.25 * tau)  # V - ½·τ·½S
        ab_be = self._banded(0.25 * tau)  # V - (τ/2)·½S for implicit half steps
        u = np.asarray(u0, float).copy()
        slices = [u.copy()]
        for k in range(n_t):
            if k < self.rannacher:
                for _ in range(2):
                    u = solve_banded((1, 1), ab_be, self.V * u)
            else:
                rhs = self.V * u + 0.25 * tau * self._S_mul(u)
                u = solve_banded((1, 1), ab_cn, rhs)
            if store:
                slices.append(u.copy())
        if not store:
            slices.append(u)
        return slices, tau

    def mass(self, u):
        return float(np.dot(self.V, u))

    def neumann_residual(self, u):
        """One-sided second-order derivative at s = L."""
        return abs(3 * u[-1] - 4 * u[-2] + u[-3]) / (2 * self.h)


@dataclass
class GridSolution:
    """Time slices of a grid solve with spline evaluation."""

    grid: Grid1D
    slices: list
    tau: float
    _splines: dict = field(default_factory=dict, repr=False)

    def spline(self, k):
        if k not in self._splines:
            u = self.slices[k]
            m = 8
            s = self.grid.s
            ext_s = np.concatenate([-s[m:0:-1], s, 2 * s[-1] - s[-2:-m - 2:-1]])
            ext_u = np.concatenate([u[m:0:-1], u, u[-2:-m - 2:-1]])
            self._splines[k] = CubicSpline(ext_s, ext_u)
        return self._splines[k]

    def index(self, t):
        k = t / self.tau
        kr = int(round(k))
        if abs(k - kr) > 1e-6:
            raise OracleError("time is not on the grid")
        return kr

    def at(self, s, t, nu=0):
        return self.spline(self.index(t))(s, nu)


class RadialGridOracle:
    """Grid oracle for axisymmetric/radial problems (hemisphere, disk, half-line).

    Chart points are mapped to the grid coordinate s (θ, ρ or x) and back;
    test functions must be invariant under the symmetry.
    """

    def __init__(self, model, T_max=1.0, n_cells=2000, dt=1e-3, x_max=None):
        self.model = model
        self.T_max = float(T_max)
        if isinstance(model, Hemisphere):
            self.kind = "grid_1d"
            self.grid = Grid1D(np.sin, 0.5 * math.pi, n_cells, dt)
            self.to_s = lambda x: Hemisphere.theta(x)
            self.from_s = lambda s: Hemisphere.chart_point(s)
            self.cross = lambda s: 1.0 / np.tan(s)  # w'/w
        elif isinstance(model, Disk):
            self.kind = "grid_disk_radial"
            R = model.radius
            if model.drift_K:
                K = model.drift_K
                w = lambda s: np.abs(s) * np.exp(-0.5 * K * s * s)  # noqa: E731
            else:
                w = np.abs
            self.grid = Grid1D(w, R, n_cells, dt)
            self.to_s = lambda x: np.linalg.norm(np.asarray(x, float), axis=-1)
            self.from_s = lambda s: np.stack([np.asarray(s, float), np.zeros_like(s)], axis=-1)
            self.cross = lambda s: 1.0 / s - model.drift_K * s
        elif isinstance(model, HalfSpace) and model.dim == 1:
            self.kind = "grid_1d"
            L = x_max if x_max is not None else 8.0 * math.sqrt(self.T_max) + 4.0
            K = model.drift_K
            w = (lambda s: np.ones_like(s)) if K == 0 else (lambda s: np.exp(-0.5 * K * s * s))
            self.grid = Grid1D(w, L, n_cells, dt)
            self.to_s = lambda x: np.asarray(x, float)[..., 0]
            self.from_s = lambda s: np.asarray(s, float)[..., None]
            self.cross = lambda s: -K * s
        else:
            raise OracleError(f"no grid oracle for model {model.model_id}")
        self._sol = {}

    def solution(self, f, t):
        name = getattr(f, "name", None)
        key = name if name is not None else id(f)
        sol = self._sol.get(key)
        need = max(t, self.T_max) + 4 * self.grid.dt
        if sol is None or sol[1] < need - 1e-12:
            u0 = np.asarray(f(self.from_s(self.grid.s)), float)
            slices, tau = self.grid.solve(u0, need)
            sol = (GridSolution(self.grid, slices, tau), need, f)
            self._sol[key] = sol
        return sol[0]

    def _sd(self, f, x, t):
        f = make_function(f, self.model.dim) if not callable(f) else f
        sol = self.solution(f, t)
        s = float(self.to_s(np.asarray(x, float)))
        return sol, s

    def value(self, f, x, t):
        x = np.asarray(x, float)
        if x.ndim > 1:
            return np.array([self.value(f, xi, t) for xi in x])
        sol, s = self._sd(f, x, t)
        return float(sol.at(s, t))

    def _dirs(self, x, v):
        """Components of an orthonormal-frame vector v along e_s and e_φ at x."""
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        if self.model.dim == 1:
            return float(v[0]), 0.0
        r = np.linalg.norm(x)
        if r < 1e-14:
            return float(v[0]), float(v[1])  # any radial direction
        xh = x / r
        return float(np.dot(v, xh)), float(xh[0] * v[1] - xh[1] * v[0])

    def grad(self, f, x, t, v):
        sol, s = self._sd(f, x, t)
        a, _ = self._dirs(x, v)
        if self.model.dim > 1 and s < 1e-14:
            return 0.0
        return float(sol.at(s, t, 1)) * a

    def hess(self, f, x, t, v):
        sol, s = self._sd(f, x, t)
        a, b = self._dirs(x, v)
        upp = float(sol.at(s, t, 2))
        if self.model.dim == 1:
            return upp * a * a
        if s < 1e-12:
            return upp * (a * a + b * b)
        up = float(sol.at(s, t, 1))
        return upp * a * a + self._tangential(s) * up * b * b

    def _tangential(self, s):
        if self.kind == "grid_disk_radial":
            return 1.0 / s
        return 1.0 / math.tan(s)

    def hess_eigen(self, f, x, t):
        """Eigenvalues of the covariant Hessian (orthonormal frame)."""
        sol, s = self._sd(f, x, t)
        upp = float(sol.at(s, t, 2))
        if self.model.dim == 1:
            return np.array([upp])
        if s < 1e-12:
            return np.array([upp, upp])
        return np.array([upp, self._tangential(s) * float(sol.at(s, t, 1))])

    def Lf(self, f, x, t, route="temporal"):
        sol, s = self._sd(f, x, t)
        if route == "temporal":
            k = sol.index(t)
            tau = sol.tau
            if k >= 2 and k + 2 < len(sol.slices):
                sp = [sol.spline(k + j)(s) for j in (-2, -1, 1, 2)]
                d1 = (sp[2] - sp[1]) / (2 * tau)
                d2 = (sp[3] - sp[0]) / (4 * tau)
                return float(2.0 * (4 * d1 - d2) / 3.0)
            if k + 2 < len(sol.slices):
                u = [sol.spline(k + j)(s) for j in range(3)]
                return float(2.0 * (-3 * u[0] + 4 * u[1] - u[2]) / (2 * tau))
            raise OracleError("need slices beyond t for the temporal route")
        if route == "spatial":
            upp = float(sol.at(s, t, 2))
            up = float(sol.at(s, t, 1))
            if s < 1e-12 and self.model.dim > 1:
                return 2.0 * upp
            return upp + float(self.cross(s)) * up
        raise OracleError("route must be 'temporal' or 'spatial'")


# ---------------------------------------------------------------------------
# uniform entry points


def make_oracle(model, kind=None, T_max=1.0, **opts):
    """Pick the oracle matching a model (image method on half-spaces)."""
    if kind is None:
        kind = "image_halfspace" if isinstance(model, HalfSpace) else "grid"
    if kind in ("image_halfline", "image_halfspace"):
        if not isinstance(model, HalfSpace):
            raise OracleError("the image method needs a half-space model")
        return ImageOracle(model.dim, model.drift_K, kind=kind if model.dim > 1 else "image_halfline", **opts)
    if kind in ("grid", "grid_1d", "grid_disk_radial"):
        return RadialGridOracle(model, T_max=T_max, **opts)
    raise OracleError(f"unknown oracle kind {kind!r}")


def oracle_value(oracle, f, x, t):
    return oracle.value(f, x, t)


def oracle_grad(oracle, f, x, t, v):
    return oracle.grad(f, x, t, v)


def oracle_hess(oracle, f, x, t, v):
    return oracle.hess(f, x, t, v)


def oracle_Lf(oracle, f, x, t, route="temporal"):
    return oracle.Lf(f, x, t, route)


# ---------------------------------------------------------------------------
# spectral reference on the hemisphere


def hemisphere_legendre(g, theta, t, n_terms=60, nu=0):
    """Neumann heat semigroup on the hemisphere by even Legendre modes.

    Expands μ ↦ g(μ) (μ = cos θ) in P_{2k} on [0, 1], the Neumann
    eigenfunctions, and evolves each mode by e^{-ℓ(ℓ+1)t/2}.

    Args:
        g: Callable of μ ∈ [0, 1].
        theta: Polar angle(s).
        t: Time.
        nu: 0 for the value, 1 or 2 for θ-derivatives.
    """
    z, w = np.polynomial.legendre.leggauss(400)
    mu = 0.5 * (z + 1.0)
    wq = 0.5 * w
    gm = g(mu)
    theta = np.asarray(theta, float)
    c = np.cos(theta)
    sn = np.sin(theta)
    out = np.zeros_like(c)
    for k in range(n_terms):
        ell = 2 * k
        coef = (2 * ell + 1) * np.sum(wq * gm * eval_legendre(ell, mu))
        decay = math.exp(-0.5 * ell * (ell + 1) * t)
        if nu == 0:
            term = eval_legendre(ell, c)
        else:
            # derivatives of P_ℓ(cos θ) via the Legendre recurrences
            p1 = _legendre_d1(ell, c)
            if nu == 1:
                term = -sn * p1
            else:
                p2 = _legendre_d2(ell, c, p1)
                term = sn * sn * p2 - c * p1
        out = out + coef * decay * term
    return out


def _legendre_d1(ell, x):
    if ell == 0:
        return np.zeros_like(x)
    x = np.asarray(x, float)
    near = np.abs(1 - x * x) < 1e-10
    safe = np.where(near, 0.5, x)
    d = ell * (safe * eval_legendre(ell, safe) - eval_legendre(ell - 1, safe)) / (safe * safe - 1)
    edge = 0.5 * ell * (ell + 1) * np.sign(x) ** (ell + 1)
    return np.where(near, edge, d)


def _legendre_d2(ell, x, p1):
    x = np.asarray(x, float)
    near = np.abs(1 - x * x) < 1e-10
    safe = np.where(near, 0.5, x)
    p1s = _legendre_d1(ell, safe)
    d2 = (2 * safe * p1s - ell * (ell + 1) * eval_legendre(ell, safe)) / (1 - safe * safe)
    edge = (ell - 1) * ell * (ell + 1) * (ell + 2) / 8.0 * np.sign(x) ** ell
    return np.where(near, edge, d2)


# ---------------------------------------------------------------------------
# Ornstein-Uhlenbeck semigroup on the line


def mehler(h, x, t, K, nodes=96):
    """Mehler formula for P_t = e^{tL/2}, L = d²/dx² - Kx d/dx.

    P_t h(x) = E h(e^{-Kt/2}x + sξ) with s² = (1 - e^{-Kt})/K, vectorised over x.
    Even h also gives the Neumann semigroup of the half-line.
    """
    x = np.asarray(x, float)
    if t <= 0:
        return h(x)
    z, w = np.polynomial.hermite.hermgauss(nodes)
    s = math.sqrt(-math.expm1(-K * t) / K) if K > 0 else math.sqrt(t)
    m = math.exp(-0.5 * K * t) * x
    pts = m[..., None] + math.sqrt(2.0) * s * z
    return np.sum(w * h(pts), axis=-1) / math.sqrt(math.pi)


def mehler_log(log_h, g, x, t, K, nodes=96):
    """Log-domain Mehler formula for rapidly growing h.

    Returns log P_t h(x) and the h-weighted average E[h g]/E[h] over the
    Mehler kernel, with g evaluated at the same nodes.
    """
    from scipy.special import logsumexp, softmax

    x = np.asarray(x, float)
    z, w = np.polynomial.hermite.hermgauss(nodes)
    s = math.sqrt(-math.expm1(-K * t) / K) if K > 0 else math.sqrt(t)
    pts = math.exp(-0.5 * K * t) * x[..., None] + math.sqrt(2.0) * s * z
    lw = np.log(w / math.sqrt(math.pi)) + log_h(pts)
    return logsumexp(lw, axis=-1), np.sum(softmax(lw, axis=-1) * g(pts), axis=-1)

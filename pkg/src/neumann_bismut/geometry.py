"""Chart-based model manifolds with boundary.

Every tensor is expressed in a single global chart and supplied in closed
form.  Finite differences appear only in :func:`validate_geometry`, which
reconstructs the tensors from lower-order data and compares.

Index conventions (all arrays carry arbitrary leading batch axes):

* ``christoffel(x)[..., k, i, j]`` is Γ^k_ij.
* ``riemann(x)[..., l, i, j, k]`` is R^l_ijk with R(∂_i, ∂_j)∂_k = R^l_ijk ∂_l and
  R(u, v)w = ∇_u∇_v w - ∇_v∇_u w - ∇_[u,v] w.
* ``ricci(x)[..., j, k]`` is Ric_jk = R^i_ijk, so Ric(v, v) = Σ_i <R(e_i, v)v, e_i>.
* ``grad_drift(x)[..., k, j]`` and ``grad_normal(x)[..., k, j]`` are ∇_j Z^k and ∇_j N^k.
* ``hess_normal(x)[..., k, i, j]`` is ((∇_{∂_i} ∇N)(∂_j))^k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometric input (non-SPD metric, chart violation)."""


# ---------------------------------------------------------------------------
# generic tensor helpers


def _eye(d, shape=()):
    return np.broadcast_to(np.eye(d), tuple(shape) + (d, d)).copy()


def inner(g, a, b):
    """<a, b>_g for batched chart vectors."""
    return np.einsum("...i,...ij,...j->...", a, g, b)


def _nabla_normal(N, dN, G):
    # (∇N)^k_j = ∂_j N^k + Γ^k_jm N^m
    return dN + np.einsum("...kjm,...m->...kj", G, N)


def _nabla2_normal(N, dN, ddN, G, dG):
    """Second covariant derivative of N from partial derivatives.

    ``dN[k, j] = ∂_j N^k``, ``ddN[k, i, j] = ∂_i ∂_j N^k``,
    ``dG[k, j, m, i] = ∂_i Γ^k_jm``.
    """
    D = _nabla_normal(N, dN, G)
    dD = (
        ddN
        + np.einsum("...kjmi,...m->...kij", dG, N)
        + np.einsum("...kjm,...mi->...kij", G, dN)
    )
    return (
        dD
        + np.einsum("...kim,...mj->...kij", G, D)
        - np.einsum("...mij,...km->...kij", G, D)
    )


def lower_riemann(R, g):
    """R_ijkl = <R(∂_i, ∂_j)∂_k, ∂_l>."""
    return np.einsum("...mijk,...ml->...ijkl", R, g)


def inv_sqrt_spd(A):
    """Batched inverse square root of symmetric positive-definite matrices."""
    w, V = np.linalg.eigh(A)
    if np.any(w <= 0):
        raise GeometryError("matrix is not positive definite")
    return np.einsum("...ij,...j,...kj->...ik", V, 1.0 / np.sqrt(w), V)


# ---------------------------------------------------------------------------
# base class


@dataclass(frozen=True)
class ManifoldModel:
    """Geometry bundle for one model manifold with boundary.

    Subclasses provide the analytic chart expressions.  The object is
    immutable and can be shared between worker threads.

    Attributes:
        model_id: Catalog identifier.
        dim: Chart dimension.
        K: Lower bound of Ric_Z.
        sigma: Lower bound of the second fundamental form on T∂M.
        sigma_n: Lower bound of -∇N on the full tangent space at ∂M.
        alpha: Bound on |R|_HS.
        beta: Bound on |d*R + ∇Ric_Z - R(Z)|.
        gamma: Bound on |∇²N + R(N)| at ∂M.
        drift_K: Stiffness of the optional drift Z = -∇(drift_K |x|²/2).
    """

    model_id: str = "abstract"
    dim: int = 1
    K: float = 0.0
    sigma: float = 0.0
    sigma_n: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    drift_K: float = 0.0
    flat: bool = True
    einstein_constant: float | None = None
    params: dict = field(default_factory=dict, compare=False)

    # -- metric data ---------------------------------------------------
    def metric(self, x):
        x = np.asarray(x, float)
        return _eye(self.dim, x.shape[:-1])

    def metric_inv(self, x):
        return np.linalg.inv(self.metric(x))

    def christoffel(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def christoffel_contract(self, x, v):
        """Γ(v) with Γ(v)^k_j = Γ^k_ij v^i (used by frame transport)."""
        return np.einsum("...kij,...i->...kj", self.christoffel(x), v)

    def dchristoffel(self, x):
        """``out[k, j, m, i] = ∂_i Γ^k_jm``."""
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def riemann(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 4)

    def ricci(self, x):
        return np.einsum("...iijk->...jk", self.riemann(x))

    def curvature_apply(self, x, u, v, w):
        """R(u, v)w for chart vectors at x."""
        return np.einsum("...lijk,...i,...j,...k->...l", self.riemann(x), u, v, w)

    def nabla_ricci(self, x):
        """``out[c, a, b] = (∇_c Ric)(a, b)``."""
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    # -- drift ----------------------------------------------------------
    def drift(self, x):
        x = np.asarray(x, float)
        return -self.drift_K * x

    def grad_drift(self, x):
        x = np.asarray(x, float)
        return -self.drift_K * _eye(self.dim, x.shape[:-1])

    def nabla_grad_drift(self, x):
        """``out[c, k, j] = (∇_c ∇Z)^k_j``; zero for linear drifts on flat charts."""
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def ricci_z(self, x):
        """Ric_Z(a, b) = Ric(a, b) - <∇_a Z, b> as a matrix in (a, b)."""
        g = self.metric(x)
        return self.ricci(x) - np.einsum("...kj,...km->...jm", self.grad_drift(x), g)

    def nabla_ricci_z(self, x):
        g = self.metric(x)
        return self.nabla_ricci(x) - np.einsum(
            "...cka,...kb->...cab", self.nabla_grad_drift(x), g
        )

    has_ito_drift = False

    def ito_drift(self, x):
        """-½ g^ij Γ^k_ij, the Itô correction of the chart Laplacian."""
        return -0.5 * np.einsum(
            "...ij,...kij->...k", self.metric_inv(x), self.christoffel(x)
        )

    # -- boundary -------------------------------------------------------
    def boundary_fn(self, x):
        x = np.asarray(x, float)
        return x[..., -1]

    def normal(self, x):
        x = np.asarray(x, float)
        n = np.zeros(x.shape)
        n[..., -1] = 1.0
        return n

    def dnormal(self, x):
        """Partial derivatives ``out[k, j] = ∂_j N^k`` of the chart expression."""
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 2)

    def ddnormal(self, x):
        x = np.asarray(x, float)
        return np.zeros(x.shape[:-1] + (self.dim,) * 3)

    def grad_normal(self, x):
        return _nabla_normal(self.normal(x), self.dnormal(x), self.christoffel(x))

    def hess_normal(self, x):
        return _nabla2_normal(
            self.normal(x),
            self.dnormal(x),
            self.ddnormal(x),
            self.christoffel(x),
            self.dchristoffel(x),
        )

    def tangential_projector(self, x):
        """Chart endomorphism I - N ⊗ N^♭."""
        g = self.metric(x)
        N = self.normal(x)
        Nflat = np.einsum("...i,...ij->...j", N, g)
        return _eye(self.dim, N.shape[:-1]) - np.einsum("...k,...j->...kj", N, Nflat)

    def second_fund(self, x):
        """II(a, b) = -<∇_a N, b> on T∂M, extended by zero on the normal line."""
        g = self.metric(x)
        B = -np.einsum("...ki,...kj->...ij", self.grad_normal(x), g)
        P = self.tangential_projector(x)
        B = np.einsum("...ai,...ab,...bj->...ij", P, B, P)
        return 0.5 * (B + np.swapaxes(B, -1, -2))

    def project_to_boundary(self, x):
        x = np.array(x, float)
        x[..., -1] = 0.0
        return x

    def reflect(self, x):
        """Specular reflection of points with b(x) < 0.

        Returns:
            tuple: reflected points and the pushed distance along N (twice
            the penetration depth).
        """
        x = np.array(x, float)
        depth = np.maximum(-x[..., -1], 0.0)
        x[..., -1] = np.abs(x[..., -1])
        return x, 2.0 * depth

    def in_chart(self, x):
        x = np.asarray(x, float)
        return np.all(np.isfinite(x), axis=-1)

    def frame0(self, x0):
        """Orthonormal frame at x0 (columns), g(x0)^{-1/2}."""
        return inv_sqrt_spd(self.metric(np.asarray(x0, float)))

    # -- sampling used by validation ----------------------------------
    def sample_interior(self, rng, n):
        x = rng.uniform(-2.0, 2.0, size=(n, self.dim))
        x[:, -1] = rng.uniform(0.05, 2.0, size=n)
        return x

    def sample_boundary(self, rng, n):
        return self.project_to_boundary(self.sample_interior(rng, n))

    def describe(self):
        return {
            "model": self.model_id,
            "dim": self.dim,
            "K": self.K,
            "sigma": self.sigma,
            "sigma_n": self.sigma_n,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "drift_K": self.drift_K,
        }


class HalfSpace(ManifoldModel):
    """Flat half-space {x_d >= 0}; the boundary normal is e_d."""

    def __init__(self, dim=2, drift_K=0.0, model_id=None):
        if model_id is None:
            model_id = "half_line" if dim == 1 else f"half_space_{dim}d"
        super().__init__(
            model_id=model_id,
            dim=dim,
            K=float(drift_K),
            drift_K=float(drift_K),
            flat=True,
            einstein_constant=float(drift_K),
            params={"drift_K": float(drift_K)},
        )


def HalfLine(drift_K=0.0):
    """The half-line [0, ∞) as the one-dimensional half-space."""
    return HalfSpace(1, drift_K=drift_K, model_id="half_line")


class Disk(ManifoldModel):
    """Flat disk of radius ``radius`` centred at the origin."""

    def __init__(self, radius=1.0, drift_K=0.0):
        r = float(radius)
        if r <= 0:
            raise GeometryError("disk radius must be positive")
        super().__init__(
            model_id="disk",
            dim=2,
            K=float(drift_K),
            sigma=1.0 / r,
            sigma_n=0.0,
            gamma=2.0 / (math.sqrt(3.0) * r * r),
            drift_K=float(drift_K),
            flat=True,
            einstein_constant=float(drift_K),
            params={"radius": r, "drift_K": float(drift_K)},
        )

    @property
    def radius(self):
        return self.params["radius"]

    def boundary_fn(self, x):
        x = np.asarray(x, float)
        return self.radius - np.linalg.norm(x, axis=-1)

    def _rho(self, x):
        return np.maximum(np.linalg.norm(x, axis=-1), 1e-300)

    def normal(self, x):
        x = np.asarray(x, float)
        return -x / self._rho(x)[..., None]

    def dnormal(self, x):
        x = np.asarray(x, float)
        rho = self._rho(x)[..., None, None]
        xx = np.einsum("...j,...k->...kj", x, x)
        return -(_eye(2, x.shape[:-1]) / rho - xx / rho**3)

    def ddnormal(self, x):
        x = np.asarray(x, float)
        rho = self._rho(x)[..., None, None, None]
        I = np.eye(2)
        t = (
            np.einsum("jk,...i->...kij", I, x)
            + np.einsum("ij,...k->...kij", I, x)
            + np.einsum("ik,...j->...kij", I, x)
        )
        xxx = np.einsum("...i,...j,...k->...kij", x, x, x)
        return t / rho**3 - 3.0 * xxx / rho**5

    def project_to_boundary(self, x):
        x = np.asarray(x, float)
        return self.radius * x / self._rho(x)[..., None]

    def reflect(self, x):
        x = np.asarray(x, float)
        rho = self._rho(x)
        depth = np.maximum(rho - self.radius, 0.0)
        new_rho = np.where(depth > 0, self.radius - depth, rho)
        return x * (new_rho / rho)[..., None], 2.0 * depth

    def in_chart(self, x):
        x = np.asarray(x, float)
        return np.all(np.isfinite(x), axis=-1) & (
            np.linalg.norm(x, axis=-1) <= self.radius * (1 + 1e-12)
        )

    def sample_interior(self, rng, n):
        rho = self.radius * np.sqrt(rng.uniform(0.01, 0.98, size=n))
        phi = rng.uniform(0, 2 * np.pi, size=n)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi)], axis=-1)


class Hemisphere(ManifoldModel):
    """Upper unit hemisphere in the stereographic chart from the south pole.

    Chart point u ∈ R² corresponds to (2u, 1 - |u|²)/(1 + |u|²) on S²; the
    north pole is u = 0, the equator is |u| = 1 and cos θ = (1-|u|²)/(1+|u|²).
    The metric is conformal, g = λ² I with λ = 2/(1 + |u|²), and the chart
    extends past the equator, which lets the reflection step use the exact
    isometry u ↦ u/|u|².
    """

    def __init__(self, drift_K=0.0):
        if drift_K:
            raise GeometryError("drift is only supported on flat catalog models")
        super().__init__(
            model_id="hemisphere",
            dim=2,
            K=1.0,
            sigma=0.0,
            sigma_n=0.0,
            alpha=1.0,
            beta=0.0,
            gamma=2.0 / math.sqrt(3.0),
            drift_K=0.0,
            flat=False,
            einstein_constant=1.0,
            params={},
        )

    @staticmethod
    def _lam(x):
        return 2.0 / (1.0 + np.einsum("...i,...i->...", x, x))

    def metric(self, x):
        x = np.asarray(x, float)
        return (self._lam(x) ** 2)[..., None, None] * _eye(2, x.shape[:-1])

    def metric_inv(self, x):
        x = np.asarray(x, float)
        return (self._lam(x) ** -2)[..., None, None] * _eye(2, x.shape[:-1])

    def christoffel(self, x):
        x = np.asarray(x, float)
        a = -self._lam(x)[..., None] * x  # ∂ log λ
        I = np.eye(2)
        return (
            np.einsum("ki,...j->...kij", I, a)
            + np.einsum("kj,...i->...kij", I, a)
            - np.einsum("ij,...k->...kij", I, a)
        )

    def christoffel_contract(self, x, v):
        a = -self._lam(x)[..., None] * x
        av = np.einsum("...i,...i->...", a, v)[..., None, None]
        out = v[..., :, None] * a[..., None, :] - a[..., :, None] * v[..., None, :]
        out[..., 0, 0] += av[..., 0, 0]
        out[..., 1, 1] += av[..., 0, 0]
        return out

    def ito_drift(self, x):
        # g^ij Γ^k_ij = (2 - d) λ^-2 ∂_k log λ vanishes for a 2-D conformal chart
        return np.zeros(np.shape(x))

    def dchristoffel(self, x):
        x = np.asarray(x, float)
        lam = self._lam(x)[..., None, None]
        # Da[i, m] = ∂_i a_m
        Da = -lam * _eye(2, x.shape[:-1]) + lam**2 * np.einsum("...i,...m->...im", x, x)
        I = np.eye(2)
        # ∂_i Γ^k_jm = δ_kj ∂_i a_m + δ_km ∂_i a_j - δ_jm ∂_i a_k
        return (
            np.einsum("kj,...im->...kjmi", I, Da)
            + np.einsum("km,...ij->...kjmi", I, Da)
            - np.einsum("jm,...ik->...kjmi", I, Da)
        )

    def riemann(self, x):
        g = self.metric(x)
        I = np.eye(2)
        # R(∂_i, ∂_j)∂_k = g_jk ∂_i - g_ik ∂_j
        return np.einsum("...jk,li->...lijk", g, I) - np.einsum("...ik,lj->...lijk", g, I)

    def curvature_apply(self, x, u, v, w):
        lam2 = self._lam(x) ** 2
        vw = lam2 * np.einsum("...i,...i->...", v, w)
        uw = lam2 * np.einsum("...i,...i->...", u, w)
        return vw[..., None] * u - uw[..., None] * v

    def ricci_z(self, x):
        return self.metric(x)

    def boundary_fn(self, x):
        x = np.asarray(x, float)
        return 0.5 * np.pi - 2.0 * np.arctan(np.sqrt(np.einsum("...i,...i->...", x, x)))

    @staticmethod
    def _r(x):
        return np.maximum(np.sqrt(np.einsum("...i,...i->...", x, x)), 1e-300)

    def normal(self, x):
        x = np.asarray(x, float)
        r = self._r(x)
        c = -(1.0 + r * r) / (2.0 * r)
        return c[..., None] * x

    def dnormal(self, x):
        x = np.asarray(x, float)
        r = self._r(x)
        c = -(1.0 + r * r) / (2.0 * r)
        cp = 0.5 / r**2 - 0.5
        xx = np.einsum("...j,...k->...kj", x, x)
        return c[..., None, None] * _eye(2, x.shape[:-1]) + (cp / r)[..., None, None] * xx

    def ddnormal(self, x):
        x = np.asarray(x, float)
        r = self._r(x)
        cp = 0.5 / r**2 - 0.5
        cpr = cp / r
        e = -1.5 / r**4 + 0.5 / r**2  # d/dr (c'/r)
        I = np.eye(2)
        s = lambda a: a[..., None, None, None]  # noqa: E731
        return (
            s(cp / r) * np.einsum("...i,jk->...kij", x, I)
            + s(e / r) * np.einsum("...i,...j,...k->...kij", x, x, x)
            + s(cpr)
            * (np.einsum("ij,...k->...kij", I, x) + np.einsum("ik,...j->...kij", I, x))
        )

    def project_to_boundary(self, x):
        x = np.asarray(x, float)
        return x / self._r(x)[..., None]

    def reflect(self, x):
        x = np.asarray(x, float)
        r = self._r(x)
        depth = np.maximum(-self.boundary_fn(x), 0.0)
        scale = np.where(r > 1.0, 1.0 / (r * r), 1.0)
        return x * scale[..., None], 2.0 * depth

    def in_chart(self, x):
        x = np.asarray(x, float)
        return np.all(np.isfinite(x), axis=-1) & (np.linalg.norm(x, axis=-1) <= 1.0 + 1e-12)

    def sample_interior(self, rng, n):
        theta = rng.uniform(0.05, 0.5 * np.pi - 0.02, size=n)
        phi = rng.uniform(0, 2 * np.pi, size=n)
        r = np.tan(theta / 2)
        return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)

    def sample_boundary(self, rng, n):
        phi = rng.uniform(0, 2 * np.pi, size=n)
        return np.stack([np.cos(phi), np.sin(phi)], axis=-1)

    @staticmethod
    def theta(x):
        """Polar angle of a chart point."""
        x = np.asarray(x, float)
        return 2.0 * np.arctan(np.linalg.norm(x, axis=-1))

    @staticmethod
    def chart_point(theta, phi=0.0):
        r = np.tan(0.5 * np.asarray(theta, float))
        return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)


CATALOG = ("half_line", "half_space_2d", "half_space_3d", "disk", "hemisphere")


def make_model(model_id, radius=1.0, drift_K=0.0):
    """Build a catalog model by identifier."""
    if model_id == "half_line":
        return HalfLine(drift_K=drift_K)
    if model_id == "half_space_2d":
        return HalfSpace(2, drift_K=drift_K)
    if model_id == "half_space_3d":
        return HalfSpace(3, drift_K=drift_K)
    if model_id == "disk":
        return Disk(radius=radius, drift_K=drift_K)
    if model_id == "hemisphere":
        return Hemisphere(drift_K=drift_K)
    raise GeometryError(f"unknown model id {model_id!r}; choose from {CATALOG}")


# ---------------------------------------------------------------------------
# curvature operations


def curvature_operator(model, x, u, v, w):
    """R(u, v)w at chart point x for chart vectors u, v, w."""
    return model.curvature_apply(x, u, v, w)


def dstar_R_term(model, x, u, v):
    """(d*R - R(Z) + ∇Ric_Z)^♯(u, v) at x.

    Uses <d*R(v1, v2), v3> = <(∇_{v3}Ric^♯)(v1), v2> - <(∇_{v2}Ric^♯)(v3), v1>
    and (∇Ric_Z)(u, v) = (∇_u Ric_Z)^♯(v).
    """
    ginv = model.metric_inv(x)
    T = model.nabla_ricci(x)
    TZ = model.nabla_ricci_z(x)
    dstar = np.einsum("...cab,...a,...b->...c", T, u, v) - np.einsum(
        "...bca,...b,...a->...c", T, v, u
    )
    nab = np.einsum("...cab,...c,...a->...b", TZ, u, v)
    cov = np.einsum("...kc,...c->...k", ginv, dstar + nab)
    RZ = curvature_operator(model, x, model.drift(x), u, v)
    return cov - RZ


def r_hs_norm(model, x, a, b):
    """(Σ_i |R(e_i, a)b|²)^{1/2} over a g-orthonormal basis e_i at x."""
    g = model.metric(x)
    E = inv_sqrt_spd(g)
    R = model.riemann(x)
    vals = np.einsum("...lijk,...ip,...j,...k->...pl", R, E, a, b)
    return np.sqrt(np.einsum("...pl,...lm,...pm->...", vals, g, vals))


def boundary_gamma_tensor(model, x, a, b, sign=+1.0):
    """(∇²N + sign·R(N))(a, b) at boundary points."""
    H = np.einsum("...kij,...i,...j->...k", model.hess_normal(x), a, b)
    return H + sign * curvature_operator(model, x, model.normal(x), a, b)


# ---------------------------------------------------------------------------
# validation


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    passed: bool


@dataclass
class GeometryReport:
    model_id: str
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def _fd_partial(fn, x, h):
    """Central differences; out[..., i] = ∂_i fn(x) (trailing axis appended)."""
    x = np.asarray(x, float)
    d = x.shape[-1]
    cols = []
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def _christoffel_from_metric(model, x, h):
    dg = _fd_partial(model.metric, x, h)  # [m, j, i] = ∂_i g_mj
    ginv = model.metric_inv(x)
    t = dg + np.swapaxes(dg, -1, -2) - np.einsum("...ijm->...mij", dg)
    # t[m, j, i] = ∂_i g_mj + ∂_j g_mi - ∂_m g_ij
    return 0.5 * np.einsum("...km,...mji->...kij", ginv, t)


def _riemann_from_christoffel(model, x, h):
    G = model.christoffel(x)
    dG = _fd_partial(model.christoffel, x, h)  # [l, j, k, i] = ∂_i Γ^l_jk
    return (
        np.einsum("...ljki->...lijk", dG)
        - np.einsum("...likj->...lijk", dG)
        + np.einsum("...lim,...mjk->...lijk", G, G)
        - np.einsum("...ljm,...mik->...lijk", G, G)
    )


def _random_unit(model, x, rng):
    g = model.metric(x)
    E = inv_sqrt_spd(g)
    z = rng.standard_normal(x.shape)
    z /= np.linalg.norm(z, axis=-1, keepdims=True)
    return np.einsum("...ij,...j->...i", E, z)


def _rel_err(a, b):
    scale = max(1.0, float(np.max(np.abs(b))))
    return float(np.max(np.abs(a - b))) / scale


def validate_geometry(model, n_points=200, h=1e-4, tol=1e-6, seed=0, n_pairs=1000):
    """Check a model's analytic tensors against finite differences.

    Args:
        model: A :class:`ManifoldModel`.
        n_points: Number of interior sample points.
        h: Finite-difference step.
        tol: Tolerance for the finite-difference residuals.
        seed: Seed of the sampling RNG.
        n_pairs: Number of random tangent pairs used for the constant checks.

    Returns:
        GeometryReport listing every check.

    Raises:
        GeometryError: if the metric is not symmetric positive definite at a
            sampled point.
    """
    rng = np.random.default_rng(seed)
    x = model.sample_interior(rng, n_points)
    xb = model.sample_boundary(rng, max(n_points // 2, 8))
    checks = []

    def add(name, value, tolerance, ok=None):
        ok = bool(value <= tolerance) if ok is None else bool(ok)
        checks.append(CheckResult(name, float(value), float(tolerance), ok))

    g = model.metric(x)
    if np.max(np.abs(g - np.swapaxes(g, -1, -2))) > 1e-12 or np.min(np.linalg.eigvalsh(g)) <= 0:
        raise GeometryError(f"{model.model_id}: metric not SPD at a sampled point")
    add("metric_spd", 0.0, 0.0)

    G = model.christoffel(x)
    add("christoffel_symmetric", np.max(np.abs(G - np.swapaxes(G, -1, -2))), 1e-12)
    add("christoffel_vs_fd", _rel_err(G, _christoffel_from_metric(model, x, h)), tol)

    R = model.riemann(x)
    add("riemann_vs_fd", _rel_err(R, _riemann_from_christoffel(model, x, h)), tol)
    Rl = lower_riemann(R, g)
    add("riemann_antisym_ij", np.max(np.abs(Rl + np.swapaxes(Rl, -4, -3))), 1e-8)
    add("riemann_antisym_kl", np.max(np.abs(Rl + np.swapaxes(Rl, -2, -1))), 1e-8)
    bianchi = R + np.einsum("...lijk->...ljki", R) + np.einsum("...lijk->...lkij", R)
    add("first_bianchi", np.max(np.abs(bianchi)), 1e-8)

    # finite-difference order study on the Christoffel reconstruction
    e1 = np.max(np.abs(G - _christoffel_from_metric(model, x, 8 * h)))
    e2 = np.max(np.abs(G - _christoffel_from_metric(model, x, 4 * h)))
    if e1 > 1e-11:
        order = math.log2(e1 / max(e2, 1e-300))
        add("fd_order_christoffel", -order, -1.9)
    else:
        add("fd_order_christoffel", 0.0, 0.0)

    # nabla Ric_Z against finite differences of Ric_Z
    def cov_deriv_2tensor(fn, pts):
        T = fn(pts)
        dT = _fd_partial(fn, pts, h)  # [a, b, c] = ∂_c T_ab
        Gp = model.christoffel(pts)
        return (
            np.einsum("...abc->...cab", dT)
            - np.einsum("...mca,...mb->...cab", Gp, T)
            - np.einsum("...mcb,...am->...cab", Gp, T)
        )

    if model.einstein_constant is not None:
        add("einstein_constant", np.max(np.abs(model.ricci_z(x) - model.einstein_constant * g)), 1e-10)
    add("nabla_ricci_z_vs_fd", _rel_err(model.nabla_ricci_z(x), cov_deriv_2tensor(model.ricci_z, x)), tol)

    # boundary data
    gb = model.metric(xb)
    N = model.normal(xb)
    add("normal_unit", np.max(np.abs(inner(gb, N, N) - 1.0)), 1e-10)
    add("boundary_fn_zero", np.max(np.abs(model.boundary_fn(xb))), 1e-10)
    # N = grad b near the boundary
    near = xb + 1e-3 * N
    db = _fd_partial(model.boundary_fn, near, h)
    gradb = np.einsum("...ij,...j->...i", model.metric_inv(near), db)
    add("normal_is_grad_b", _rel_err(gradb, model.normal(near)), tol)
    D = model.grad_normal(xb)
    fdD = _fd_partial(model.normal, xb, h) + np.einsum("...kjm,...m->...kj", model.christoffel(xb), N)
    add("grad_normal_vs_fd", _rel_err(D, fdD), tol)
    H = model.hess_normal(xb)
    dD = _fd_partial(model.grad_normal, xb, h)  # [k, j, i] = ∂_i D^k_j
    Gb = model.christoffel(xb)
    fdH = (
        np.einsum("...kji->...kij", dD)
        + np.einsum("...kim,...mj->...kij", Gb, D)
        - np.einsum("...mij,...km->...kij", Gb, D)
    )
    add("hess_normal_vs_fd", _rel_err(H, fdH), tol)
    nn = inner(gb, np.einsum("...kj,...j->...k", D, N), N)
    add("normal_geodesic", np.max(np.abs(nn)), 1e-8)

    # declared constants dominate the tensors on random pairs
    reps = max(1, n_pairs // n_points)
    worst = {k: -np.inf for k in ("K", "sigma", "sigma_n", "alpha", "beta", "gamma")}
    for _ in range(reps):
        v = _random_unit(model, x, rng)
        w = _random_unit(model, x, rng)
        ric = np.einsum("...i,...ij,...j->...", v, model.ricci_z(x), v)
        worst["K"] = max(worst["K"], float(np.max(model.K - ric)))
        worst["alpha"] = max(worst["alpha"], float(np.max(r_hs_norm(model, x, v, w) - model.alpha)))
        dsr = dstar_R_term(model, x, v, w)
        worst["beta"] = max(worst["beta"], float(np.max(np.sqrt(inner(g, dsr, dsr)) - model.beta)))

        vb = _random_unit(model, xb, rng)
        wb = _random_unit(model, xb, rng)
        P = model.tangential_projector(xb)
        t = np.einsum("...ij,...j->...i", P, vb)
        tn = np.sqrt(np.maximum(inner(gb, t, t), 1e-300))
        if model.dim > 1:
            t = t / tn[..., None]
            ii = np.einsum("...i,...ij,...j->...", t, model.second_fund(xb), t)
            worst["sigma"] = max(worst["sigma"], float(np.max(model.sigma - ii)))
        else:
            worst["sigma"] = max(worst["sigma"], -1.0)
        mdn = -inner(gb, np.einsum("...kj,...j->...k", D, vb), vb)
        worst["sigma_n"] = max(worst["sigma_n"], float(np.max(model.sigma_n - mdn)))
        gt = boundary_gamma_tensor(model, xb, vb, wb, +1.0)
        worst["gamma"] = max(worst["gamma"], float(np.max(np.sqrt(inner(gb, gt, gt)) - model.gamma)))
    for k, val in worst.items():
        add(f"constant_{k}_dominates", val, 1e-8)
    return GeometryReport(model.model_id, checks)

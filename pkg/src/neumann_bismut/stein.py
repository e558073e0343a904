"""Entropy, Fisher information and Stein discrepancy for Gaussian-type families.

The target is μ = N(0, K⁻¹I) on ℝⁿ (V(x) = K|x|²/2), or its even restriction
to the half-space {x_n ≥ 0}.  Even reflection maps every half-space integral
of an even integrand to the whole-space one, so both variants share the same
numbers.  The semigroup is P_t = e^{tL/2} with L = Δ - ∇V, the
Ornstein-Uhlenbeck semigroup with rate K/2.

Candidates ν are centered Gaussians N(0, c²K⁻¹I), whose constant Stein
kernel τ = c²·I gives S² = n(c² - 1)², or symmetric two-component mixtures
(no kernel known, S = ∞).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .oracle import mehler_log

GH_NODES = 64


@dataclass(frozen=True)
class MeasurePair:
    """Target μ = N(0, I/K) and candidate ν.

    Attributes:
        n: Dimension.
        K: Stiffness of V = K|x|²/2.
        c2: Variance factor, ν has covariance c²/K·I per component.
        family: ``gaussian`` or ``mixture`` (½N(-m e₁, c²/K) + ½N(m e₁, c²/K)).
        shift: Mixture offset m.
        halfspace: Use the even restriction to {x_n ≥ 0}.
    """

    n: int = 1
    K: float = 1.0
    c2: float = 2.0
    family: str = "gaussian"
    shift: float = 0.0
    halfspace: bool = False

    def __post_init__(self):
        if self.n < 1 or self.K <= 0:
            raise ValueError("need n >= 1 and K > 0")
        if not self.c2 > 0:
            raise ValueError("covariance must be SPD (c2 > 0)")
        if self.family not in ("gaussian", "mixture"):
            raise ValueError(f"unknown family {self.family!r}")

    @property
    def has_kernel(self):
        return self.family == "gaussian"

    def sigma(self):
        return self.c2 / self.K * np.eye(self.n)

    # densities on the whole space (the half-space variant only changes the
    # normalisation of both measures by the same factor 2)
    def log_mu(self, x):
        K = self.K
        return -0.5 * K * np.sum(x * x, axis=-1) + 0.5 * self.n * math.log(K / (2 * math.pi))

    def log_nu(self, x):
        K, c2, n = self.K, self.c2, self.n
        base = 0.5 * n * math.log(K / (2 * math.pi * c2))
        if self.family == "gaussian":
            return base - 0.5 * K / c2 * np.sum(x * x, axis=-1)
        e = np.zeros(n)
        e[0] = self.shift
        a = -0.5 * K / c2 * np.sum((x - e) ** 2, axis=-1)
        b = -0.5 * K / c2 * np.sum((x + e) ** 2, axis=-1)
        return base + np.logaddexp(a, b) - math.log(2.0)

    def grad_log_h(self, x):
        """∇ log(dν/dμ)."""
        K, c2 = self.K, self.c2
        if self.family == "gaussian":
            return K * (1.0 - 1.0 / c2) * x
        e = np.zeros(self.n)
        e[0] = self.shift
        a = -0.5 * K / c2 * np.sum((x - e) ** 2, axis=-1)
        b = -0.5 * K / c2 * np.sum((x + e) ** 2, axis=-1)
        wa = 1.0 / (1.0 + np.exp(b - a))
        mean = (2 * wa - 1)[..., None] * e
        return K * x - K / c2 * (x - mean)


def _gauss_grid(n, var, nodes=GH_NODES):
    """Tensor Gauss-Hermite nodes and weights for N(0, var·I) in n dimensions."""
    z, w = np.polynomial.hermite.hermgauss(nodes)
    z = z * math.sqrt(2.0 * var)
    w = w / math.sqrt(math.pi)
    pts = np.array(list(itertools.product(z, repeat=n)))
    wts = np.prod(np.array(list(itertools.product(w, repeat=n))), axis=1)
    return pts, wts


def _nu_expectation(pair, g, nodes=GH_NODES):
    """E_ν g by quadrature (mixtures as two shifted Gaussian grids)."""
    var = pair.c2 / pair.K
    pts, wts = _gauss_grid(pair.n, var, nodes)
    if pair.family == "gaussian":
        return float(np.sum(wts * g(pts)))
    e = np.zeros(pair.n)
    e[0] = pair.shift
    return 0.5 * float(np.sum(wts * g(pts + e)) + np.sum(wts * g(pts - e)))


# ---------------------------------------------------------------------------
# closed forms and their quadrature checks


def relative_entropy(pair: MeasurePair, method="closed"):
    """H(ν|μ) = ∫ h log h dμ."""
    if method == "closed" and pair.family == "gaussian":
        KS = pair.K * pair.sigma()
        return 0.5 * (float(np.trace(KS)) - pair.n - float(np.linalg.slogdet(KS)[1]))
    return _nu_expectation(pair, lambda x: pair.log_nu(x) - pair.log_mu(x))


def fisher_information(pair: MeasurePair, method="closed"):
    """I(ν|μ) = ∫ |∇h|²/h dμ = E_ν|∇ log h|²."""
    if method == "closed" and pair.family == "gaussian":
        c2 = pair.c2
        return pair.n * pair.K * (c2 - 1.0) ** 2 / c2
    return _nu_expectation(pair, lambda x: np.sum(pair.grad_log_h(x) ** 2, axis=-1))


def stein_discrepancy(pair: MeasurePair):
    """S(ν|μ) with the constant kernel τ = KΣ, or ∞ without a kernel."""
    if not pair.has_kernel:
        return math.inf
    D = pair.K * pair.sigma() - np.eye(pair.n)
    return float(np.linalg.norm(D, "fro"))


def stein_kernel(pair: MeasurePair):
    if not pair.has_kernel:
        return None
    return pair.K * pair.sigma()


# ---------------------------------------------------------------------------
# Stein identity check with polynomial-times-Gaussian test functions


@dataclass(frozen=True)
class PolyGauss:
    """f(x) = P(x) exp(-a|x|²) with P = Σ c_k x^{e_k}."""

    coeffs: tuple
    exps: tuple
    a: float

    def _mono(self, x):
        E = np.asarray(self.exps, float)  # (m, n)
        c = np.asarray(self.coeffs, float)
        xp = x[..., None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            base = np.where(E == 0, 1.0, xp**E)
            d1 = np.where(E == 0, 0.0, E * xp ** np.maximum(E - 1, 0))
            d2 = np.where(E < 2, 0.0, E * (E - 1) * xp ** np.maximum(E - 2, 0))
        return c, base, d1, d2

    def parts(self, x):
        """P, ∇P, Hess P at points x (..., n)."""
        c, base, d1, d2 = self._mono(x)
        n = x.shape[-1]
        P = np.sum(c * np.prod(base, axis=-1), axis=-1)
        gP = np.zeros(x.shape)
        hP = np.zeros(x.shape + (n,))
        for i in range(n):
            bi = base.copy()
            bi[..., i] = d1[..., i]
            gP[..., i] = np.sum(c * np.prod(bi, axis=-1), axis=-1)
            for j in range(n):
                bij = base.copy()
                if i == j:
                    bij[..., i] = d2[..., i]
                else:
                    bij[..., i] = d1[..., i]
                    bij[..., j] = d1[..., j]
                hP[..., i, j] = np.sum(c * np.prod(bij, axis=-1), axis=-1)
        return P, gP, hP

    def grad_hess(self, x):
        a = self.a
        P, gP, hP = self.parts(x)
        E = np.exp(-a * np.sum(x * x, axis=-1))
        gE = -2 * a * x * E[..., None]
        hE = (4 * a * a * np.einsum("...i,...j->...ij", x, x) - 2 * a * np.eye(x.shape[-1])) * E[..., None, None]
        g = gP * E[..., None] + P[..., None] * gE
        H = (
            hP * E[..., None, None]
            + np.einsum("...i,...j->...ij", gP, gE)
            + np.einsum("...i,...j->...ij", gE, gP)
            + P[..., None, None] * hE
        )
        return g, H


def random_test_functions(n, count=20, seed=0, even_last=False, max_deg=3):
    """Random polynomial-times-Gaussian functions; ``even_last`` gives N f = 0 on {x_n = 0}."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        m = int(rng.integers(1, 5))
        exps = rng.integers(0, max_deg + 1, size=(m, n))
        if even_last:
            exps[:, -1] = 2 * (exps[:, -1] // 2)
        out.append(PolyGauss(tuple(rng.normal(size=m)), tuple(map(tuple, exps)), float(rng.uniform(0.05, 0.5))))
    return out


def stein_identity_residual(pair: MeasurePair, f: PolyGauss, tau=None):
    """|∫⟨∇V, ∇f⟩dν - ∫⟨τ, Hess f⟩_HS dν| for a constant kernel τ."""
    tau = stein_kernel(pair) if tau is None else np.asarray(tau, float)
    if tau is None:
        raise ValueError("no kernel available")

    def lhs(x):
        g, _ = f.grad_hess(x)
        return pair.K * np.sum(x * g, axis=-1)

    def rhs(x):
        _, H = f.grad_hess(x)
        return np.einsum("ij,...ij->...", tau, H)

    return abs(_nu_expectation(pair, lhs) - _nu_expectation(pair, rhs))


def check_stein_identity(pair: MeasurePair, count=20, seed=0, tau=None):
    """Maximum identity residual over random test functions (even in x_n on the half-space)."""
    fs = random_test_functions(pair.n, count, seed, even_last=pair.halfspace)
    return max(stein_identity_residual(pair, f, tau) for f in fs)


# ---------------------------------------------------------------------------
# inequalities


def hsi_rhs(S2, I, K, n_factor=1.0):
    """½ n_f S² ln(1 + I/(n_f K S²)); the limit 0 at S = 0."""
    if S2 <= 0.0:
        return 0.0
    return 0.5 * n_factor * S2 * math.log1p(I / (n_factor * K * S2))


def hsi_general_rhs(I, S2, n, K, alpha, beta, eps, case="ii"):
    """Curved-case HSI right side for a given ε > 0 (formula evaluation).

    (C ∧ I)/(2K) + ½B ln(1 + ((I - C) ∨ 0)/(BK)) with C = n²(1+ε)(α/√K + β/K)²S² and
    B = n²(1 + 1/ε)S² in case ``i`` or (1 + 1/ε)S² in case ``ii``.
    """
    C = n * n * (1 + eps) * (alpha / math.sqrt(K) + beta / K) ** 2 * S2
    B = (n * n if case == "i" else 1.0) * (1 + 1 / eps) * S2
    if B <= 0:
        return min(C, I) / (2 * K)
    return min(C, I) / (2 * K) + 0.5 * B * math.log1p(max(I - C, 0.0) / (B * K))


@dataclass
class InequalityReport:
    c2: float
    n: int
    K: float
    H: float
    I: float
    S2: float
    hsi: float
    lsi: float
    degenerate: bool

    @property
    def margin(self):
        return self.hsi - self.H

    @property
    def lsi_margin(self):
        return self.lsi - self.H

    @property
    def tighter(self):
        return self.hsi < self.lsi

    @property
    def passed(self):
        if self.degenerate:
            return abs(self.H) < 1e-12 and abs(self.hsi) < 1e-12
        return self.margin > 0

    def as_row(self):
        return {
            "c2": self.c2, "n": self.n, "K": self.K, "H": self.H, "I": self.I, "S2": self.S2,
            "HSI_RHS": self.hsi, "LSI_RHS": self.lsi, "HSI_margin": self.margin,
            "LSI_margin": self.lsi_margin, "HSI_tighter": self.tighter, "passed": self.passed,
        }


def check_HSI(pair: MeasurePair):
    """H ≤ ½S² ln(1 + I/(KS²)) next to the log-Sobolev bound H ≤ I/(2K)."""
    H = relative_entropy(pair)
    I = fisher_information(pair)
    S = stein_discrepancy(pair)
    S2 = S * S
    if math.isinf(S2):
        hsi = math.inf
    else:
        hsi = hsi_rhs(S2, I, pair.K)
    return InequalityReport(pair.c2, pair.n, pair.K, H, I, S2, hsi, I / (2 * pair.K), degenerate=(S2 == 0.0))


def sweep_HSI(c2_values=(0.25, 0.5, 1.5, 2.0, 4.0), K=1.0, n_values=(1, 2)):
    return [check_HSI(MeasurePair(n=n, K=K, c2=c2)) for n in n_values for c2 in c2_values]


# ---------------------------------------------------------------------------
# de Bruijn and Fisher decay in one dimension


def fisher_along_flow(pair: MeasurePair, t, nodes=160):
    """I_μ(P_t h) with P_t h computed by the Mehler formula.

    ∂_x log P_t h = e^{-Kt/2} E[h'] / E[h] over the Mehler kernel, evaluated in
    log space so that growing densities (c² > 1) do not overflow.  The outer
    integral ∫ |∂ log P_t h|² P_t h dμ uses Gauss-Hermite nodes of a Gaussian
    wider than both μ and ν.
    """
    if pair.n != 1:
        raise ValueError("the flow check is one-dimensional")
    K = pair.K

    def log_h(y):
        return pair.log_nu(y[..., None]) - pair.log_mu(y[..., None])

    def score(y):
        return pair.grad_log_h(y[..., None])[..., 0]

    var = max(pair.c2, 1.0) / K + pair.shift**2
    z, w = np.polynomial.hermite.hermgauss(nodes)
    x = z * math.sqrt(2 * var)
    log_q = -0.5 * x * x / var - 0.5 * math.log(2 * math.pi * var)
    w = w / math.sqrt(math.pi)
    if t <= 0:
        lPh, sc = log_h(x), score(x)
    else:
        lPh, sc = mehler_log(log_h, score, x, t, K)
    dlog = math.exp(-0.5 * K * t) * sc
    return float(np.sum(w * dlog**2 * np.exp(lPh + pair.log_mu(x[:, None]) - log_q)))


@dataclass
class IdentityReport:
    H: float
    quad: float
    tail: float
    t_max: float
    decay_ok: bool
    decay_points: list
    stein_decay_ok: bool

    @property
    def estimate(self):
        return self.quad + 0.5 * self.tail

    @property
    def rel_error(self):
        if self.H == 0.0:
            return abs(self.estimate)
        return abs(self.estimate - self.H) / self.H

    @property
    def passed(self):
        return self.rel_error < 0.01 and self.decay_ok


def check_debruijn(pair: MeasurePair, t_max=None, n_quad=64, tail_budget=1e-3, t_cap=None, n_grid=20):
    """H(ν|μ) against ½∫_0^{t_max} I_μ(P_t h) dt plus the exponential tail bound.

    The tail ½∫_{t_max}^∞ I_μ(P_t h) dt is at most I(ν|μ)e^{-K t_max}/(2K); t_max is
    doubled until that bound is below ``tail_budget`` times the quadrature.  The
    estimate reported is the quadrature plus half the tail bound.  Fisher decay
    I_μ(P_t h) ≤ e^{-Kt} I(ν|μ) and the Stein decay
    I_μ(P_t h) ≤ K S²/(e^{2Kt} - e^{Kt}) are checked on an ``n_grid`` point grid.
    """
    K = pair.K
    H = relative_entropy(pair, "closed" if pair.family == "gaussian" else "quadrature")
    I0 = fisher_information(pair, "closed" if pair.family == "gaussian" else "quadrature")
    t_max = 5.0 / K if t_max is None else float(t_max)
    t_cap = 80.0 / K if t_cap is None else t_cap
    zl, wl = np.polynomial.legendre.leggauss(n_quad)
    while True:
        # substitution t = -log(u)/K clusters nodes near t = 0 where I varies fastest
        u_lo = math.exp(-K * t_max)
        u = 0.5 * (1 - u_lo) * zl + 0.5 * (1 + u_lo)
        ts = -np.log(u) / K
        wts = 0.5 * (1 - u_lo) * wl / (K * u)
        quad = 0.5 * sum(wi * fisher_along_flow(pair, ti) for ti, wi in zip(ts, wts))
        tail = I0 * math.exp(-K * t_max) / (2 * K)
        if tail <= tail_budget * max(quad, 1e-300) or t_max >= t_cap or I0 == 0.0:
            break
        t_max = min(2 * t_max, t_cap)
    grid = np.linspace(0.0, t_max, n_grid)
    pts = []
    ok = True
    S2 = stein_discrepancy(pair) ** 2
    stein_ok = True
    # quadrature noise of the flow at t = 0 sets the comparison tolerance
    rtol = max(1e-9, 2 * abs(fisher_along_flow(pair, 0.0) - I0) / max(I0, 1e-300))
    for t in grid:
        It = fisher_along_flow(pair, t)
        bound = math.exp(-K * t) * I0
        good = It <= bound * (1 + rtol) + 1e-14
        ok &= good
        if t > 0 and math.isfinite(S2):
            stein_ok &= It <= K * S2 / (math.exp(2 * K * t) - math.exp(K * t)) * (1 + 1e-9) + 1e-14
        pts.append((float(t), It, bound, bool(good)))
    return IdentityReport(H, quad, tail, t_max, bool(ok), pts, bool(stein_ok))


def tensorization(c2=2.0, K=1.0, dims=(1, 2, 3), method="quadrature"):
    """H, I, S² per dimension; all should be n times the 1-D values."""
    rows = []
    for n in dims:
        p = MeasurePair(n=n, K=K, c2=c2)
        rows.append((n, relative_entropy(p, method), fisher_information(p, method), stein_discrepancy(p) ** 2))
    return rows

"""Closed-form derivative estimates for the Neumann semigroup, checked against ground truth.

Every bound is a pure function of its scalar inputs (curvature constants,
horizon, semigroup moments and local-time moments).  A :class:`BoundReport`
pairs the right side with a measured left side and passes when
``margin >= -3 * se`` where ``se`` combines the standard error of the left side
and the propagated standard error of Monte Carlo moments on the right.

Notation: K⁻ = max(-K, 0), σ⁻ = max(-σ, 0); ``Pf2`` is P_T f²(x) and ``Pg2`` is
P_T |∇f|²(x).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .estimators import estimate_local_time_moments
from .functions import TestFunction, grad_norm_sq, make_function, square_of
from .geometry import make_model
from .oracle import ImageOracle, make_oracle

C_BDG = 3.0 + math.sqrt(10.0)


@dataclass
class BoundReport:
    """Outcome of one bound check."""

    bound_id: str
    config: str
    left: float
    right: float
    se: float = 0.0
    inputs: dict = field(default_factory=dict)
    notes: str = ""

    @property
    def margin(self):
        return self.right - self.left

    @property
    def passed(self):
        return bool(self.margin >= -3.0 * self.se)

    def as_row(self):
        row = asdict(self)
        row["margin"] = self.margin
        row["passed"] = self.passed
        return row


def _neg(x):
    return max(-float(x), 0.0)


# ---------------------------------------------------------------------------
# formulas


def lpf_general_rhs(f_sup, Z_sup, T, K, exp_sigma_l=1.0):
    """|LP_Tf| ≤ 2‖f‖∞(√3‖Z‖∞/(3√T) + (3+√10)(E e^{σ⁻l_T})^{1/2} e^{K⁻T/2}/T)."""
    return 2.0 * f_sup * (
        math.sqrt(3.0) * Z_sup / (3.0 * math.sqrt(T))
        + C_BDG * math.sqrt(exp_sigma_l) * math.exp(0.5 * _neg(K) * T) / T
    )


def lpf_convex_rhs(Pf2, Z_sup, T, K):
    """Convex boundary: |LP_Tf| ≤ (P_Tf²)^{1/2}(2√3‖Z‖∞/(3√T) + √2 e^{K⁻T/2}/T)."""
    return math.sqrt(Pf2) * (
        2.0 * math.sqrt(3.0) * Z_sup / (3.0 * math.sqrt(T)) + math.sqrt(2.0) * math.exp(0.5 * _neg(K) * T) / T
    )


def hessian_global_rhs(alpha, beta, T, K, Pf2):
    """σ = γ = 0: |Hess P_Tf| ≤ (α + √T β/2 + 2/T) e^{K⁻T} (P_T f²)^{1/2}."""
    return (alpha + 0.5 * math.sqrt(T) * beta + 2.0 / T) * math.exp(_neg(K) * T) * math.sqrt(Pf2)


def hessian_full_rhs(alpha, beta, gamma, T, K, Pf2, exp_sigma_l=1.0, int_sq=0.0):
    """Global estimate with the boundary term.

    (α + β√T/2 + 2/T) e^{K⁻T} E[e^{σl_T}] (P_Tf²)^{1/2}
    + γ/(2√T) e^{K⁻T} E[e^{σl_T}]^{1/2} E[(∫_0^T e^{σl_s/2} dl_s)²]^{1/2} (P_Tf²)^{1/2}.
    """
    eK = math.exp(_neg(K) * T)
    root = math.sqrt(Pf2)
    main = (alpha + 0.5 * beta * math.sqrt(T) + 2.0 / T) * eK * exp_sigma_l * root
    edge = gamma / (2.0 * math.sqrt(T)) * eK * math.sqrt(exp_sigma_l) * math.sqrt(max(int_sq, 0.0)) * root
    return main + edge


def hessian_gradform_rhs(alpha, beta, K, t, Pg2):
    """K > 0, convex boundary with ∇²N + R(N) = 0:
    (1/√(∫_0^t e^{Kr}dr) + α/√K + β/K) e^{-Kt/2} (P_t|∇f|²)^{1/2}."""
    if K <= 0:
        raise ValueError("the gradient-form estimate needs K > 0")
    integral = math.expm1(K * t) / K
    return (1.0 / math.sqrt(integral) + alpha / math.sqrt(K) + beta / K) * math.exp(-0.5 * K * t) * math.sqrt(Pg2)


def hessian_gradterms_rhs(alpha, beta, gamma, T, K, grad_sup, exp_sigma_l=1.0, mixed=0.0):
    """Estimate with gradient terms for general γ:
    (α√T + βT/2 + 1/√T) E[e^{σ⁻l_T}] e^{K⁻T} ‖∇f‖∞
    + γ/2 E[e^{σ⁻l_T/2} ∫ e^{σ⁻l_s/2} dl_s] e^{K⁻T} ‖∇f‖∞."""
    eK = math.exp(_neg(K) * T)
    return (
        (alpha * math.sqrt(T) + 0.5 * beta * T + 1.0 / math.sqrt(T)) * exp_sigma_l * eK * grad_sup
        + 0.5 * gamma * mixed * eK * grad_sup
    )


def gradient_rhs(t, K, Pf2):
    """|∇P_tf| ≤ e^{K⁻t}/√t (P_t f²)^{1/2} (convex boundary)."""
    return math.exp(_neg(K) * t) / math.sqrt(t) * math.sqrt(Pf2)


def _report(bound_id, config, rhs, inputs, moments, left, left_se=0.0, notes=""):
    """Evaluate ``rhs(**inputs, **moments)`` and propagate moment errors.

    Args:
        moments: Mapping name -> (value, standard error).
    """
    vals = {k: v for k, (v, _) in moments.items()}
    right = rhs(**inputs, **vals)
    var = left_se**2
    for k, (v, s) in moments.items():
        if s > 0:
            bumped = dict(vals)
            bumped[k] = v + s
            var += (rhs(**inputs, **bumped) - right) ** 2
    echo = dict(inputs)
    echo.update({k: v for k, v in vals.items()})
    echo.update({f"{k}_se": s for k, (_, s) in moments.items()})
    return BoundReport(bound_id, config, float(left), float(right), math.sqrt(var), echo, notes)


# ---------------------------------------------------------------------------
# left sides from the oracles


def _named(name, fn):
    return TestFunction(name, fn, None)


def _left_sides(model, oracle, f, x0, t):
    """|LP_tf|, |∇P_tf|, |Hess P_tf| (operator norm), P_t f², P_t|∇f|² at x0."""
    x0 = np.asarray(x0, float)
    d = model.dim
    out = {"Pf2": oracle.value(square_of(f), x0, t)}
    out["Pg2"] = oracle.value(_named(f"|grad {f.name}|^2", grad_norm_sq(f, model)), x0, t)
    out["Lf"] = abs(oracle.Lf(f, x0, t))
    if isinstance(oracle, ImageOracle):
        g = np.array([oracle.grad(f, x0, t, e) for e in np.eye(d)])
        out["grad"] = float(np.linalg.norm(g))
        out["hess"] = float(np.max(np.abs(np.linalg.eigvalsh(oracle.hess_matrix(f, x0, t)))))
    else:
        out["grad"] = abs(oracle.grad(f, x0, t, np.eye(d)[0] if np.allclose(x0, 0) else _radial(x0)))
        out["hess"] = float(np.max(np.abs(oracle.hess_eigen(f, x0, t))))
    return out


def _radial(x0):
    return np.asarray(x0, float) / np.linalg.norm(x0)


# ---------------------------------------------------------------------------
# suite


@dataclass
class SuiteConfig:
    """One (model, f, x0, T) cell of the bound matrix."""

    label: str
    model_id: str
    f: str
    x0: tuple
    T: float
    radius: float = 1.0
    drift_K: float = 0.0
    bounds: tuple = ()
    window: float | None = None  # sup window for unbounded f


def default_suite():
    """The catalog test matrix."""
    cfgs = [
        SuiteConfig("half_line/sq", "half_line", "sq", (0.5,), 1.0,
                    bounds=("lpf_general", "lpf_convex", "hess_global", "hess_full", "grad"), window=0.5 + 8.0),
        SuiteConfig("half_line/sq/t=0.1", "half_line", "sq", (0.5,), 0.1, bounds=("grad", "hess_global")),
        SuiteConfig("half_line/sq/t=0.5", "half_line", "sq", (0.5,), 0.5, bounds=("grad", "hess_global")),
        SuiteConfig("half_line/gauss", "half_line", "gauss:1", (0.2,), 1.0,
                    bounds=("lpf_general", "lpf_convex", "hess_global", "grad")),
        SuiteConfig("half_space_2d/gauss", "half_space_2d", "gauss:1", (0.2, 0.3), 0.5,
                    bounds=("lpf_general", "lpf_convex", "hess_global", "hess_full", "grad")),
        SuiteConfig("half_space_3d/gauss", "half_space_3d", "gauss:0.5", (0.1, -0.2, 0.4), 1.0,
                    bounds=("lpf_general", "lpf_convex", "hess_global", "grad")),
        SuiteConfig("ou_half_space/coord0", "half_space_2d", "coord:0", (0.3, 0.4), 1.0, drift_K=1.0,
                    bounds=("hess_gradform", "hess_global", "grad")),
        SuiteConfig("ou_half_space/gauss", "half_space_2d", "gauss:1", (0.3, 0.4), 1.0, drift_K=1.0,
                    bounds=("hess_gradform", "hess_global", "grad")),
        SuiteConfig("disk/sq", "disk", "sq", (0.3, 0.0), 0.5,
                    bounds=("lpf_convex", "hess_full", "hess_gradterms", "grad"), window=1.0),
        SuiteConfig("disk/gauss", "disk", "gauss:2", (0.0, 0.6), 0.3,
                    bounds=("lpf_convex", "hess_full", "hess_gradterms", "grad"), window=1.0),
    ]
    from .geometry import Hemisphere

    for th in (0.0, 0.3, 0.6, 0.9, 1.2):
        x = tuple(Hemisphere.chart_point(th).tolist())
        cfgs.append(SuiteConfig(f"hemisphere/costheta/theta={th:g}", "hemisphere", "costheta", x, 0.5,
                                bounds=("lpf_convex", "hess_full", "hess_gradterms", "grad")))
    return cfgs


SUITES = {
    "lpf": ("lpf_general", "lpf_convex"),
    "hess": ("hess_global", "hess_full", "hess_gradform", "hess_gradterms"),
    "grad": ("grad",),
}


def _sup_f(fn, cfg):
    if fn.bounded:
        return fn.sup, ""
    w = cfg.window if cfg.window is not None else 10.0
    # sup of the unbounded test functions used here is attained at the window edge
    return float(fn(np.full((1, len(cfg.x0)), w / math.sqrt(len(cfg.x0))))[0]), f"window-sup on |x|<={w:g}"


def _sup_grad(fn, model, cfg):
    if fn.name == "costheta":
        return 1.0, ""
    if fn.name.startswith("coord"):
        return 1.0, ""
    if fn.name.startswith("gauss"):
        a = float(fn.name.split(":")[1])
        return math.sqrt(2 * a) * math.exp(-0.5), ""
    w = cfg.window if cfg.window is not None else 10.0
    return 2.0 * w, f"window-sup on |x|<={w:g}"


def run_config(cfg: SuiteConfig, which=None, N=20_000, dt=1e-3, seed=0, threads=1):
    """Evaluate every requested bound of one configuration."""
    model = make_model(cfg.model_id, radius=cfg.radius, drift_K=cfg.drift_K)
    fn = make_function(cfg.f, model.dim)
    T = cfg.T
    oracle = make_oracle(model, T_max=T + 0.05) if model.model_id.startswith("half") else make_oracle(
        model, T_max=T + 0.05, n_cells=2000, dt=5e-4)
    left = _left_sides(model, oracle, fn, cfg.x0, T)
    Z_sup = 0.0 if model.drift_K == 0 else math.inf
    K, alpha, beta, gamma = model.K, model.alpha, model.beta, model.gamma
    sig, sigm = model.sigma, _neg(model.sigma)
    bounds = [b for b in cfg.bounds if which is None or b in which]

    mom = {}
    needs_mc = (sig != 0.0 or gamma != 0.0) and any(b in ("hess_full", "hess_gradterms", "lpf_general") for b in bounds)
    if needs_mc:
        lams = sorted({sig, -sigm if sigm else 0.0, 0.0})
        lt = estimate_local_time_moments(model, cfg.x0, T, N=N, dt=dt, seed=seed, lambdas=lams, threads=threads)

        def m(key):
            e = lt[key]
            return (e.value, e.std_error)

        mom = {
            "exp_sigma": m(f"exp({sig:g}l)"),
            "int_sq": m(f"int({sig:g})^2"),
            "exp_sigma_minus": m(f"exp({-sigm:g}l)") if sigm else (1.0, 0.0),
            "mixed_minus": m(f"mixed({-sigm:g})") if sigm else m("mixed(0)"),
        }
    reports = []
    common = {"K": K, "T": T}
    for b in bounds:
        if b == "lpf_general":
            fsup, note = _sup_f(fn, cfg)
            mm = {"exp_sigma_l": mom["exp_sigma_minus"]} if sigm else {}
            inputs = {"f_sup": fsup, "Z_sup": Z_sup, **common}
            reports.append(_report(b, cfg.label, lpf_general_rhs, inputs, mm, left["Lf"], notes=note))
        elif b == "lpf_convex":
            if sig < 0:
                continue
            inputs = {"Pf2": left["Pf2"], "Z_sup": Z_sup, **common}
            reports.append(_report(b, cfg.label, lpf_convex_rhs, inputs, {}, left["Lf"]))
        elif b == "hess_global":
            if sig != 0 or gamma != 0:
                continue
            inputs = {"alpha": alpha, "beta": beta, "Pf2": left["Pf2"], **common}
            reports.append(_report(b, cfg.label, hessian_global_rhs, inputs, {}, left["hess"]))
        elif b == "hess_full":
            inputs = {"alpha": alpha, "beta": beta, "gamma": gamma, "Pf2": left["Pf2"], **common}
            mm = {"exp_sigma_l": mom["exp_sigma"], "int_sq": mom["int_sq"]} if mom else {}
            reports.append(_report(b, cfg.label, hessian_full_rhs, inputs, mm, left["hess"]))
        elif b == "hess_gradform":
            inputs = {"alpha": alpha, "beta": beta, "K": K, "t": T, "Pg2": left["Pg2"]}
            reports.append(_report(b, cfg.label, hessian_gradform_rhs, inputs, {}, left["hess"]))
        elif b == "hess_gradterms":
            gsup, note = _sup_grad(fn, model, cfg)
            inputs = {"alpha": alpha, "beta": beta, "gamma": gamma, "grad_sup": gsup, **common}
            mm = {"exp_sigma_l": mom["exp_sigma_minus"], "mixed": mom["mixed_minus"]} if mom else {}
            reports.append(_report(b, cfg.label, hessian_gradterms_rhs, inputs, mm, left["hess"], notes=note))
        elif b == "grad":
            if sig < 0:
                continue
            inputs = {"t": T, "K": K, "Pf2": left["Pf2"]}
            reports.append(_report(b, cfg.label, gradient_rhs, inputs, {}, left["grad"]))
        else:
            raise ValueError(f"unknown bound {b!r}")
    return reports


def run_suite(suite="all", N=20_000, dt=1e-3, seed=0, threads=1, configs=None):
    """Run the bound matrix; ``suite`` is ``lpf``, ``hess``, ``grad`` or ``all``."""
    if suite != "all" and suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    which = None if suite == "all" else SUITES[suite]
    out = []
    for cfg in configs or default_suite():
        out.extend(run_config(cfg, which, N=N, dt=dt, seed=seed, threads=threads))
    return out

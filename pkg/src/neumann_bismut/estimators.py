"""Monte Carlo estimators for ∇P_Tf, LP_Tf and Hess P_Tf.

Paths are simulated in fixed-size blocks.  Block b draws its randomness
from the counter-based stream (seed, b), and per-path samples are
concatenated in block order.  Results are therefore bit-identical for any
thread count.

Vectors ``v`` are given in the g-orthonormal frame at x0, which coincides
with chart coordinates on the flat models.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .functions import make_function
from .pathsim import PathRecorder, ReflectingSimulator, block_rng
from .schedules import HSchedule, make_schedule
from .transport import StepGeometry, _dot, _matvec, pull_back_vector, w_step

DEFAULT_BLOCK = 8192


@dataclass
class BismutEstimate:
    """Monte Carlo point estimate with its standard error."""

    value: float
    std_error: float
    n_samples: int
    n_rejected: int
    schedule: str
    runtime: float
    samples: np.ndarray | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def as_row(self):
        return {
            "value": self.value,
            "std_error": self.std_error,
            "n_samples": self.n_samples,
            "n_rejected": self.n_rejected,
            "schedule": self.schedule,
            "runtime": self.runtime,
        }


def summarize(samples, rejected=None, schedule="", runtime=0.0, extra=None):
    samples = np.asarray(samples, float)
    if rejected is None:
        rejected = np.zeros(samples.shape, bool)
    ok = samples[~rejected]
    n = ok.size
    mean = float(np.mean(ok)) if n else math.nan
    se = float(np.std(ok, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return BismutEstimate(mean, se, int(n), int(rejected.sum()), schedule, runtime, samples, extra or {})


def run_blocks(model, x0, T, N, dt, seed, kernel, threads=1, block_size=DEFAULT_BLOCK,
               contact="bridge", dump=None):
    """Run ``kernel(sim, consumers)`` on every block and merge per-path outputs.

    Args:
        kernel: Callable returning a dict of per-path arrays for one block.
        dump: Optional ``(k, callback)``; the first k paths of block 0 are
            recorded and ``callback(DiffusionPath)`` is invoked.

    Returns:
        dict of concatenated per-path arrays (block order).
    """
    N = int(N)
    if N <= 0:
        raise ValueError("N must be positive")
    nb = -(-N // block_size)
    sizes = [min(block_size, N - b * block_size) for b in range(nb)]

    def work(b):
        sim = ReflectingSimulator(model, x0, sizes[b], T, dt, block_rng(seed, b), contact)
        consumers = []
        rec = None
        if dump is not None and b == 0:
            rec = PathRecorder(min(dump[0], sizes[0]))
            consumers.append(rec)
        out = kernel(sim, consumers)
        if rec is not None and rec.rows:
            dump[1](rec.to_path(model, sim.dt, seed))
        return out

    threads = max(1, int(threads))
    if threads == 1 or nb == 1:
        parts = [work(b) for b in range(nb)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, range(nb)))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _steps(sim, consumers):
    for st in sim.steps():
        for c in consumers:
            c.update(st)
        yield st


def _prep(model, f, x0, v=None):
    f = make_function(f, model.dim)
    x0 = np.asarray(x0, float).reshape(model.dim)
    if v is not None:
        v = np.asarray(v, float).reshape(model.dim)
    return f, x0, v


def _final_chart_vector(sim, w):
    return _matvec(sim.U, w)


# ---------------------------------------------------------------------------
# semigroup


def estimate_semigroup(model, f, x0, T, N=100_000, dt=1e-3, seed=0, threads=1,
                       block_size=DEFAULT_BLOCK, contact="bridge", dump=None):
    """E f(X_T) for the reflecting diffusion started at x0."""
    f, x0, _ = _prep(model, f, x0)
    t0 = time.perf_counter()

    def kernel(sim, consumers):
        for _ in _steps(sim, consumers):
            pass
        x = sim.x if sim.x is not None else sim.initial_state()[0]
        return {"s": f(x)}

    out = run_blocks(model, x0, T, N, dt, seed, kernel, threads, block_size, contact, dump)
    return summarize(out["s"], schedule="none", runtime=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# gradient


def estimate_gradient(model, f, x0, v, T, N=100_000, dt=1e-3, seed=0, formula="grad14",
                      schedule=None, threads=1, block_size=DEFAULT_BLOCK, contact="bridge",
                      dump=None):
    """<∇P_Tf(x0), v> by one of the two first-order representations.

    ``grad13``: E <∇f(X_T), Q_T v>.
    ``grad14``: E f(X_T) ∫_0^T <g'(s) Q_s v, dB_s> with the ramp g(s) = s/T.
    Q is the limit functional Q_lim (normal part removed at the boundary).
    """
    f, x0, v = _prep(model, f, x0, v)
    if formula not in ("grad13", "grad14"):
        raise ValueError("formula must be grad13 or grad14")
    sch = schedule or make_schedule("ramp", T)
    if formula == "grad14" and sch.kind not in ("ramp",):
        raise ValueError("the first-order formula needs the ramp schedule")
    t0 = time.perf_counter()

    def kernel(sim, consumers):
        q = np.broadcast_to(v, (sim.n_paths, model.dim)).copy()
        I = np.zeros(sim.n_paths)
        for st in _steps(sim, consumers):
            if formula == "grad14":
                I += sch.dh(st.t) * _dot(q, st.dB)
            q = StepGeometry(model, st).q_propagator(math.inf).apply(q)
        if formula == "grad13":
            s = f.df(sim.x, _final_chart_vector(sim, q))
        else:
            s = f(sim.x) * I
        return {"s": s}

    out = run_blocks(model, x0, T, N, dt, seed, kernel, threads, block_size, contact, dump)
    return summarize(out["s"], schedule=sch.schedule_id if formula == "grad14" else "none",
                     runtime=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# L P_T f


def estimate_LPf(model, f, x0, T, N=100_000, dt=1e-3, seed=0, schedule=None, n_penalty=math.inf,
                 method="recursive", threads=1, block_size=DEFAULT_BLOCK, contact="bridge",
                 dump=None):
    """L P_T f(x0) = 2 E[f(X_T)(M_T^{(h)} + ∫ h̃_s h_s <Z(X_s), //dB_s>)].

    Args:
        schedule: HSchedule; defaults to h ≡ -1/T.
        n_penalty: Penalization n of Q^(n); ``inf`` uses the limit functional.
        method: ``recursive`` (inverse-free) or ``inverse`` (finite n only).
    """
    f, x0, _ = _prep(model, f, x0)
    sch = schedule or make_schedule("constant", T)
    if method == "inverse" and math.isinf(n_penalty):
        raise ValueError("the inverse route needs a finite penalization n")
    t0 = time.perf_counter()
    has_drift = model.drift_K != 0.0

    def kernel(sim, consumers):
        npaths, d = sim.n_paths, model.dim
        M = np.zeros(npaths)
        Zt = np.zeros(npaths)
        rej = np.zeros(npaths, bool)
        if method == "recursive":
            xi = np.zeros((npaths, d))
        else:
            Q = np.broadcast_to(np.eye(d), (npaths, d, d)).copy()
            Qi = Q.copy()
            J = np.zeros((npaths, d))
        for st in _steps(sim, consumers):
            hk = sch.h(st.t)
            if has_drift:
                Zh = pull_back_vector(model, st.U, st.x, model.drift(st.x))
                Zt += sch.htilde(st.t) * hk * _dot(Zh, st.dB)
            sg = StepGeometry(model, st)
            if method == "recursive":
                M += hk * _dot(xi, st.dB)
                xi = sg.q_propagator(n_penalty).apply(xi + hk * st.dB)
            else:
                M += hk * np.sum(_matvec(Q, J) * st.dB, axis=-1)
                J = J + hk * _matvec(Qi, st.dB)
                Q = sg.q_propagator(n_penalty).apply(Q)
                pinv = sg.q_propagator(n_penalty, inverse=True)
                Qi = np.swapaxes(pinv.apply(np.swapaxes(Qi, -1, -2)), -1, -2)
                rej[sg.singular] = True
                if (st.k + 1) % 100 == 0:
                    ok = ~rej
                    Qi[ok] = np.linalg.inv(Q[ok])
                big = ~np.all(np.isfinite(Qi), axis=(-1, -2)) | (np.max(np.abs(Qi), axis=(-1, -2)) > 1e12)
                rej |= big
                Qi[rej] = 0.0
                J[rej] = 0.0
        s = 2.0 * f(sim.x) * (M + Zt)
        return {"s": s, "rej": rej}

    out = run_blocks(model, x0, T, N, dt, seed, kernel, threads, block_size, contact, dump)
    return summarize(out["s"], out["rej"], sch.schedule_id, time.perf_counter() - t0,
                     {"n_penalty": n_penalty, "method": method})


# ---------------------------------------------------------------------------
# Hessian


def _hessian_kernel(model, f, v, sch, gradform):
    def kernel(sim, consumers):
        npaths, d = sim.n_paths, model.dim
        a = np.broadcast_to(v, (npaths, d)).copy()
        W = np.zeros((npaths, d))
        A = np.zeros(npaths)
        Bq = np.zeros(npaths)
        C = np.zeros(npaths)
        for st in _steps(sim, consumers):
            hk = sch.h(st.t)
            A += hk * _dot(a, st.dB)
            if not gradform:
                Bq += hk * hk * _dot(a, a) * st.dt
                C += hk * _dot(W, st.dB)
            W, a = w_step(StepGeometry(model, st), W, a, sch.htilde(st.t))
        x = sim.x
        if gradform:
            s = -f.df(x, _final_chart_vector(sim, a)) * A + f.df(x, _final_chart_vector(sim, W))
        else:
            s = f(x) * (-C + A * A - Bq)
        return {"s": s}

    return kernel


def estimate_hessian(model, f, x0, v, T, N=100_000, dt=1e-3, seed=0, schedule=None, threads=1,
                     block_size=DEFAULT_BLOCK, contact="bridge", dump=None):
    """Hess P_Tf(v, v) from the representation with Q̃ and W.

    Hess P_Tf(v, v) = -E[f(X_T) ∫ h_s <W_s^{h̃}(v, v), //dB_s>]
                      + E[f(X_T)((∫ <Q̃_s h_s v, //dB_s>)² - ∫ |Q̃_s h_s v|² ds)].
    """
    f, x0, v = _prep(model, f, x0, v)
    sch = schedule or make_schedule("constant", T)
    t0 = time.perf_counter()
    out = run_blocks(model, x0, T, N, dt, seed, _hessian_kernel(model, f, v, sch, False),
                     threads, block_size, contact, dump)
    return summarize(out["s"], schedule=sch.schedule_id, runtime=time.perf_counter() - t0)


def estimate_hessian_gradform(model, f, x0, v, T, N=100_000, dt=1e-3, seed=0, schedule=None,
                              threads=1, block_size=DEFAULT_BLOCK, contact="bridge", dump=None):
    """Hess P_Tf(v, v) = E[-df(Q̃_T v) ∫ <Q̃_s h_s v, //dB_s> + df(W_T^{h̃}(v, v))]."""
    f, x0, v = _prep(model, f, x0, v)
    sch = schedule or make_schedule("constant", T)
    t0 = time.perf_counter()
    out = run_blocks(model, x0, T, N, dt, seed, _hessian_kernel(model, f, v, sch, True),
                     threads, block_size, contact, dump)
    return summarize(out["s"], schedule=sch.schedule_id, runtime=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# auxiliary path statistics


def estimate_local_time_moments(model, x0, T, N=20_000, dt=1e-3, seed=0, lambdas=(0.0,),
                                threads=1, block_size=DEFAULT_BLOCK):
    """Local-time moments with standard errors.

    For each λ: E e^{λ l_T}, E(∫ e^{λ l_s/2} dl_s)² and the mixed moment
    E[e^{λ l_T/2} ∫ e^{λ l_s/2} dl_s]; also E l_T and E l_T².

    Returns:
        dict mapping names to BismutEstimate.
    """
    x0 = np.asarray(x0, float).reshape(model.dim)
    lambdas = tuple(float(x) for x in lambdas)

    def kernel(sim, consumers):
        l = np.zeros(sim.n_paths)
        ints = {lam: np.zeros(sim.n_paths) for lam in lambdas}
        for st in _steps(sim, consumers):
            for lam in lambdas:
                ints[lam] += np.exp(0.5 * lam * (l + 0.5 * st.dl)) * st.dl
            l += st.dl
        out = {"l": l}
        for lam in lambdas:
            out[f"e{lam}"] = np.exp(lam * l)
            out[f"i{lam}"] = ints[lam] ** 2
            out[f"c{lam}"] = np.exp(0.5 * lam * l) * ints[lam]
        return out

    out = run_blocks(model, x0, T, N, dt, seed, kernel, threads, block_size)
    res = {"l": summarize(out["l"]), "l2": summarize(out["l"] ** 2)}
    for lam in lambdas:
        res[f"exp({lam:g}l)"] = summarize(out[f"e{lam}"])
        res[f"int({lam:g})^2"] = summarize(out[f"i{lam}"])
        res[f"mixed({lam:g})"] = summarize(out[f"c{lam}"])
    return res


def estimate_M_statistics(model, x0, T, h: HSchedule, N=20_000, dt=1e-3, seed=0, n_penalty=math.inf,
                          threads=1, block_size=DEFAULT_BLOCK):
    """Moments of M^{(h,n)}: E M_T, E M_T², E sup|M| and the constant C(h).

    C(h) = E ∫ h_s² exp(∫_0^s K⁻ dr + ∫_0^s σ⁻ dl_r) ds.
    """
    x0 = np.asarray(x0, float).reshape(model.dim)
    Km = max(-model.K, 0.0)
    sm = max(-model.sigma, 0.0)

    def kernel(sim, consumers):
        n = sim.n_paths
        M = np.zeros(n)
        sup = np.zeros(n)
        C = np.zeros(n)
        l = np.zeros(n)
        xi = np.zeros((n, model.dim))
        for st in _steps(sim, consumers):
            hk = h.h(st.t)
            C += hk * hk * np.exp(Km * st.t + sm * l) * st.dt
            M += hk * _dot(xi, st.dB)
            np.maximum(sup, np.abs(M), out=sup)
            xi = StepGeometry(model, st).q_propagator(n_penalty).apply(xi + hk * st.dB)
            l += st.dl
        return {"M": M, "sup": sup, "C": C}

    out = run_blocks(model, x0, T, N, dt, seed, kernel, threads, block_size)
    return {
        "M": summarize(out["M"]),
        "M2": summarize(out["M"] ** 2),
        "sup": summarize(out["sup"]),
        "C": summarize(out["C"]),
    }

"""Transport functionals carried along reflecting paths.

All matrices and vectors live in base-point coordinates: a tangent vector
w at X_t is stored as U_t^{-1} w, where U_t is the (g-orthonormal) parallel
transport frame.  Each time step contributes a propagator

    A_k = B_k · exp(-½ Ric_Z^ dt),

with B_k a boundary factor on steps that hit the boundary.  Damping uses
exponential Euler, and local-time terms enter as multiplicative factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import dstar_R_term

BLOWUP = 1e12
RESYNC_EVERY = 100
PENALTY_CLAMP = 30.0


class NumericalAbort(RuntimeError):
    """A transport quantity became non-finite or exceeded the blow-up guard."""


def expm_batch(A, tol=1e-17):
    """Matrix exponential for a stack of small matrices.

    Taylor series with scaling and squaring; accurate to roughly machine
    precision for the small generators that occur per time step.
    """
    A = np.asarray(A, float)
    if A.size == 0:
        return A.copy()
    d = A.shape[-1]
    nrm = float(np.max(np.sum(np.abs(A), axis=-1)))
    s = 0 if nrm <= 0.5 else int(math.ceil(math.log2(nrm / 0.5)))
    X = A / (2.0**s)
    x = nrm / (2.0**s)
    order = 1
    term = x
    while term > tol and order < 20:
        order += 1
        term *= x / order
    I = np.eye(d)
    E = I + X / order
    for k in range(order - 1, 0, -1):
        E = I + (X @ E) / k
    for _ in range(s):
        E = E @ E
    return E


def _matvec(M, v):
    return np.einsum("...ij,...j->...i", M, v)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def pull_back_vector(model, U, x, w):
    """Base coordinates U^{-1} w = U^T g w of a chart vector w at x."""
    return np.einsum("...ji,...j->...i", U, _matvec(model.metric(x), w))


def pull_back_endo(model, U, x, A):
    """U^{-1} A U for a chart endomorphism A at x."""
    return np.swapaxes(U, -1, -2) @ (model.metric(x) @ (A @ U))


class Propagator:
    """Per-step linear map acting on stacked base vectors or matrices.

    ``interior`` is None (identity), a scalar, or a (n, d, d) stack;
    ``boundary`` holds factors for the rows ``idx`` applied afterwards.
    """

    def __init__(self, interior, idx, boundary):
        self.interior = interior
        self.idx = idx
        self.boundary = boundary

    def _left(self, F, X, vec):
        if vec:
            return _matvec(F, X)
        return F @ X

    def apply(self, X):
        vec = X.ndim == 2
        if self.interior is None:
            Y = X.copy()
        elif np.isscalar(self.interior):
            Y = self.interior * X
        else:
            Y = self._left(self.interior, X, vec)
        if self.idx is not None and len(self.idx):
            Y[self.idx] = self._left(self.boundary, Y[self.idx], vec)
        return Y


class StepGeometry:
    """Pull-backs of the curvature and boundary tensors for one time step."""

    def __init__(self, model, st):
        self.model = model
        self.st = st
        self._ric = None
        self._int = {}
        self._bnd = None
        self.bidx = np.flatnonzero(st.dl > 0)
        self.cidx = np.flatnonzero(st.hit)

    # interior ---------------------------------------------------------
    def ric_hat(self):
        if self._ric is None:
            m, st = self.model, self.st
            self._ric = np.swapaxes(st.U, -1, -2) @ (m.ricci_z(st.x) @ st.U)
        return self._ric

    def interior_factor(self, sign=-1.0):
        """exp(sign·½·Ric_Z^ dt), or a scalar / None when Ric_Z^ is a multiple of I."""
        m = self.model
        if sign not in self._int:
            c = m.einstein_constant
            if c is not None:
                # Ric_Z = c g gives Ric_Z^ = c I in an orthonormal frame
                self._int[sign] = None if c == 0 else math.exp(sign * 0.5 * c * self.st.dt)
            else:
                self._int[sign] = expm_batch(sign * 0.5 * self.st.dt * self.ric_hat())
        return self._int[sign]

    # boundary ---------------------------------------------------------
    def boundary(self):
        """Base-coordinate N, ∇N and II at the contact points of hit rows."""
        if self._bnd is None:
            m, st = self.model, self.st
            idx = self.cidx
            xb = st.xb[idx]
            U = st.U_new[idx]
            xn = st.x_new[idx]
            Nh = pull_back_vector(m, U, xn, m.normal(xb))
            Nh /= np.sqrt(_dot(Nh, Nh))[:, None]
            d = m.dim
            P = np.eye(d) - Nh[..., :, None] * Nh[..., None, :]
            Ah = pull_back_endo(m, U, xn, m.grad_normal(xb))
            II = -(P @ Ah @ P)
            II = 0.5 * (II + np.swapaxes(II, -1, -2))
            self._bnd = dict(N=Nh, P=P, A=Ah, II=II, dl=st.dl[idx], xb=xb, U=U, xn=xn)
        return self._bnd

    def _rows(self, sel):
        """Positions within ``cidx`` of rows with positive local time."""
        return np.flatnonzero(self.st.dl[self.cidx] > 0) if sel == "dl" else np.arange(len(self.cidx))

    def q_propagator(self, n=math.inf, inverse=False):
        """Propagator of Q^(n) (n = inf gives the limit Q_lim).

        With ``inverse`` the map returned is the inverse propagator applied on
        the right (for Q^{-1}); rows whose factor is not invertible are listed
        in ``self.singular``.
        """
        interior = self.interior_factor(+1.0 if inverse else -1.0)
        if len(self.cidx) == 0:
            self.singular = np.zeros(0, int)
            return Propagator(interior, None, None)
        b = self.boundary()
        dl = b["dl"][:, None, None]
        sgn = 1.0 if inverse else -1.0
        E_ii = expm_batch(sgn * 0.5 * b["II"] * dl)
        NN = b["N"][..., :, None] * b["N"][..., None, :]
        if math.isinf(n):
            F = b["P"] @ E_ii
            singular = np.arange(len(self.cidx)) if inverse else np.zeros(0, int)
        else:
            stiff = n * b["dl"] > PENALTY_CLAMP
            F = expm_batch(sgn * 0.5 * (b["II"] + n * NN) * dl)
            if np.any(stiff):
                F[stiff] = (b["P"] @ E_ii)[stiff]
            singular = np.flatnonzero(stiff) if inverse else np.zeros(0, int)
        # rows that were only flagged as contacts (dl = 0) keep F = P for n = inf
        self.singular = self.cidx[singular]
        if inverse:
            # inverse factor acts on the right: Q^{-1} <- Q^{-1} F
            F = np.swapaxes(F, -1, -2)
        return Propagator(interior, self.cidx, F)

    def qtilde_propagator(self, inverse=False):
        """Propagator of Q̃: exp(½ (∇N)^ dl) · exp(-½ Ric_Z^ dt)."""
        interior = self.interior_factor(+1.0 if inverse else -1.0)
        rows = self._rows("dl")
        if len(rows) == 0:
            return Propagator(interior, None, None)
        b = self.boundary()
        sgn = -1.0 if inverse else 1.0
        F = expm_batch(sgn * 0.5 * b["A"][rows] * b["dl"][rows][:, None, None])
        if inverse:
            F = np.swapaxes(F, -1, -2)
        return Propagator(interior, self.cidx[rows], F)

    # W sources ------------------------------------------------------------
    def curvature_source(self, a, b_vec):
        """R^(ΔB, a)b in base coordinates (zero on flat models)."""
        m, st = self.model, self.st
        if m.flat:
            return None
        U = st.U
        ch = lambda v: _matvec(U, v)  # noqa: E731
        Rv = m.curvature_apply(st.x, ch(st.dB), ch(a), ch(b_vec))
        return pull_back_vector(m, U, st.x, Rv)

    def dstar_source(self, a, b_vec):
        m, st = self.model, self.st
        if m.beta == 0.0:
            return None
        U = st.U
        w = dstar_R_term(m, st.x, _matvec(U, a), _matvec(U, b_vec))
        return pull_back_vector(m, U, st.x, w)

    def boundary_source(self, a, b_vec):
        """(∇²N - R(N))^(a, b) at contact rows with positive local time."""
        m = self.model
        rows = self._rows("dl")
        if len(rows) == 0 or (m.flat and m.gamma == 0.0):
            return None, None
        bd = self.boundary()
        U, xb, xn = bd["U"][rows], bd["xb"][rows], bd["xn"][rows]
        ia = self.cidx[rows]
        A = _matvec(U, a[ia])
        B = _matvec(U, b_vec[ia])
        H = np.einsum("...kij,...i,...j->...k", m.hess_normal(xb), A, B)
        RN = m.curvature_apply(xb, m.normal(xb), A, B)
        return ia, pull_back_vector(m, U, xn, H - RN)


# ---------------------------------------------------------------------------
# state containers


@dataclass
class TransportState:
    """Transport quantities at one time for a batch of paths (base coordinates)."""

    t: float
    Qn: np.ndarray | None = None
    Q_lim: np.ndarray | None = None
    Qtilde: np.ndarray | None = None
    Qtilde_inv: np.ndarray | None = None
    W: np.ndarray | None = None
    n: float = math.inf


def _identity_stack(n_paths, d):
    return np.broadcast_to(np.eye(d), (n_paths, d, d)).copy()


def _guard(X, what):
    if not np.all(np.isfinite(X)):
        raise NumericalAbort(f"{what}: non-finite values")
    if np.max(np.abs(X)) > BLOWUP:
        raise NumericalAbort(f"{what}: norm exceeded {BLOWUP:g}")


def evolve_Qn(path, n):
    """Q^(n) along a stored path.

    Args:
        path: DiffusionPath.
        n: Penalization parameter; ``math.inf`` gives the projected limit.

    Returns:
        ndarray (S+1, n_paths, d, d) of Q_{t_k} in base coordinates.
    """
    m = path.model
    Q = _identity_stack(path.n_paths, m.dim)
    out = [Q]
    for st in path.steps():
        Q = StepGeometry(m, st).q_propagator(n).apply(Q)
        _guard(Q, "Q^(n)")
        out.append(Q)
    return np.stack(out)


def evolve_Q_limit(path):
    """Q_lim: Q^(n) with the normal component removed at every boundary contact."""
    return evolve_Qn(path, math.inf)


def evolve_Qtilde(path, resync_every=RESYNC_EVERY):
    """Q̃ and its separately propagated inverse along a stored path.

    Returns:
        tuple: (Q̃, Q̃^{-1}, residual) with stacks of shape (S+1, n, d, d) and
        the per-step residual max |Q̃ Q̃^{-1} - I|.
    """
    m = path.model
    d = m.dim
    Q = _identity_stack(path.n_paths, d)
    Qi = Q.copy()
    Qs, Qis, res = [Q], [Qi], [0.0]
    for st in path.steps():
        sg = StepGeometry(m, st)
        Q = sg.qtilde_propagator().apply(Q)
        pinv = sg.qtilde_propagator(inverse=True)
        Qi = _right_apply(pinv, Qi)
        _guard(Q, "Q~")
        r = float(np.max(np.abs(Q @ Qi - np.eye(d))))
        if (st.k + 1) % resync_every == 0:
            Qi = np.linalg.inv(Q)
        Qs.append(Q)
        Qis.append(Qi)
        res.append(r)
    return np.stack(Qs), np.stack(Qis), np.array(res)


def _right_apply(prop, X):
    """X ↦ X · F for an inverse propagator (factors already transposed)."""
    Xt = np.swapaxes(X, -1, -2)
    return np.swapaxes(prop.apply(Xt), -1, -2)


def evolve_W(path, v, htilde=None):
    """W^{h̃}(v, v) along a stored path.

    Solves DW = h̃ R(//dB, Q̃v)Q̃v - ½ h̃ D1(Q̃v, Q̃v) dt - ½ h̃ D2(Q̃v, Q̃v) dl
    - ½ Ric_Z(W) dt + ½ (∇N)(W) dl with W_0 = 0, where D1 is the d*R term and
    D2 = ∇²N - R(N).

    Args:
        path: DiffusionPath.
        v: Base tangent vector (orthonormal coordinates at x0).
        htilde: Callable t ↦ h̃(t); defaults to 1.

    Returns:
        tuple: (W, Q̃v) stacks of shape (S+1, n_paths, d).
    """
    m = path.model
    a = np.broadcast_to(np.asarray(v, float), (path.n_paths, m.dim)).copy()
    W = np.zeros_like(a)
    Ws, As = [W], [a]
    for st in path.steps():
        sg = StepGeometry(m, st)
        W, a = w_step(sg, W, a, 1.0 if htilde is None else htilde(st.t))
        Ws.append(W)
        As.append(a)
    return np.stack(Ws), np.stack(As)


def w_step(sg, W, a, ht):
    """Advance (W, a = Q̃v) over one step; returns the new pair."""
    src = sg.curvature_source(a, a)
    if src is not None:
        W = W + ht * src
    ds = sg.dstar_source(a, a)
    if ds is not None:
        W = W - 0.5 * ht * sg.st.dt * ds
    prop = sg.qtilde_propagator()
    W = prop.apply(W)
    a = prop.apply(a)
    ia, bs = sg.boundary_source(a, a)
    if ia is not None:
        W[ia] -= 0.5 * ht * sg.st.dl[ia][:, None] * bs
    return W, a


@dataclass
class MResult:
    """Per-path values of M^{(h,n)}_T, sup_t |M_t| and the rejection mask."""

    M: np.ndarray
    sup: np.ndarray
    rejected: np.ndarray


def double_integral_M(path, h, n=math.inf, method="recursive"):
    """M^{(h,n)}_T = ∫_0^T <h_s Q_s ∫_0^s h_r Q_r^{-1} dB_r, dB_s> (Itô).

    Args:
        path: DiffusionPath.
        h: Callable t ↦ h(t) (deterministic schedule).
        n: Penalization parameter (``math.inf`` for the limit).
        method: ``"recursive"`` uses ξ_k = Q_k J_k with
            ξ_{k+1} = A_k(ξ_k + h_k ΔB_k) and needs no inverse;
            ``"inverse"`` forms J with a separately propagated Q^{-1}
            (finite n only), resynchronized every 100 steps.  Paths whose
            inverse is singular or exceeds the blow-up guard are rejected.

    Returns:
        MResult
    """
    m = path.model
    npaths, d = path.n_paths, m.dim
    M = np.zeros(npaths)
    sup = np.zeros(npaths)
    rejected = np.zeros(npaths, bool)
    if method == "recursive":
        xi = np.zeros((npaths, d))
        for st in path.steps():
            hk = h(st.t)
            M += hk * np.sum(xi * st.dB, axis=-1)
            np.maximum(sup, np.abs(M), out=sup)
            xi = StepGeometry(m, st).q_propagator(n).apply(xi + hk * st.dB)
        return MResult(M, sup, rejected)
    if method != "inverse":
        raise ValueError("method must be 'recursive' or 'inverse'")
    if math.isinf(n):
        raise ValueError("the inverse route needs a finite penalization n")
    Q = _identity_stack(npaths, d)
    Qi = Q.copy()
    J = np.zeros((npaths, d))
    for st in path.steps():
        hk = h(st.t)
        M += hk * np.sum(_matvec(Q, J) * st.dB, axis=-1)
        np.maximum(sup, np.abs(M), out=sup)
        J = J + hk * _matvec(Qi, st.dB)
        sg = StepGeometry(m, st)
        Q = sg.q_propagator(n).apply(Q)
        Qi = _right_apply(sg.q_propagator(n, inverse=True), Qi)
        rejected[sg.singular] = True
        if (st.k + 1) % RESYNC_EVERY == 0:
            ok = ~rejected
            Qi[ok] = np.linalg.inv(Q[ok])
        big = ~np.all(np.isfinite(Qi), axis=(-1, -2)) | (np.max(np.abs(Qi), axis=(-1, -2)) > BLOWUP)
        rejected |= big
        Qi[rejected] = 0.0
        J[rejected] = 0.0
    M[rejected] = 0.0
    return MResult(M, sup, rejected)


# ---------------------------------------------------------------------------
# pathwise invariants


def envelope_bound(path, model=None):
    """exp(-½∫K ds - ½∫σ dl) along the stored path, shape (S+1, n)."""
    m = model or path.model
    t = np.arange(path.n_steps + 1) * path.dt
    return np.exp(-0.5 * m.K * t)[:, None] * np.exp(-0.5 * m.sigma * path.local_time)


def normal_mass(path, Q, v, n):
    """Running ∫ |P_N Q⁽ⁿ⁾ v|² dl along the path, shape (S+1, n_paths).

    Within a boundary step the normal component decays like e^{-n l/2}, so the
    step contributes |<N, Q v>|² (1 - e^{-n Δl}) / n exactly.
    """
    m = path.model
    out = np.zeros(path.n_paths)
    acc = np.zeros((path.n_steps + 1, path.n_paths))
    for k, st in enumerate(path.steps()):
        if np.any(st.dl > 0):
            sg = StepGeometry(m, st)
            b = sg.boundary()
            rows = np.flatnonzero(b["dl"] > 0)
            idx = sg.cidx[rows]
            Qv = _matvec(Q[k][idx], np.broadcast_to(v, (len(idx), m.dim)))
            dl = b["dl"][rows]
            out[idx] += np.sum(b["N"][rows] * Qv, axis=-1) ** 2 * (-np.expm1(-n * dl)) / n
        acc[k + 1] = out
    return acc

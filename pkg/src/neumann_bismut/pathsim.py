"""Reflecting diffusion paths with frames and boundary local time.

The simulated process solves dX = //∘dB + ½Z dt + ½N dl, i.e. it has
generator ½(Δ + Z).  Paths are advanced in vectorized batches: one call to
:meth:`ReflectingSimulator.steps` yields a :class:`Step` record per time step
for every path of the batch, so transport functionals can be accumulated on
the fly without storing trajectories.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .geometry import inv_sqrt_spd


class PathAbort(RuntimeError):
    """A path left the chart validity region or produced non-finite values."""


def n_steps_for(T, dt):
    """Number of steps of the uniform grid on [0, T]; dt > T gives one step."""
    if T < 0 or dt <= 0:
        raise ValueError("need T >= 0 and dt > 0")
    if T == 0:
        return 0
    return max(1, int(math.ceil(T / dt - 1e-9)))


def block_rng(seed, block):
    """Counter-based generator for one block of paths.

    The stream depends only on (seed, block), so results do not depend on
    how blocks are scheduled across threads.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(block),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class Step:
    """One time step for a batch of paths (left point ``x``, ``U``)."""

    k: int
    t: float
    dt: float
    x: np.ndarray
    U: np.ndarray
    dB: np.ndarray
    x_new: np.ndarray
    U_new: np.ndarray
    dl: np.ndarray
    hit: np.ndarray
    xb: np.ndarray


def transport_frame(model, U, x, dx):
    """Parallel transport of frame columns along the chart segment x → x + dx.

    Midpoint rule for dU = -Γ(dX)U, which is consistent with the
    Stratonovich interpretation.
    """
    if model.flat:
        return U
    U_pred = U - model.christoffel_contract(x, dx) @ U
    Gm = model.christoffel_contract(x + 0.5 * dx, dx)
    return U - Gm @ (0.5 * (U + U_pred))


def orthonormalize(model, U, x, tol=1e-6):
    """Restore U^T g U = I once the frame drift exceeds ``tol``.

    A Newton-Schulz sweep U ← ½U(3I - U^T g U) converges quadratically to
    the g-orthonormal polar factor; large deviations fall back to an exact
    inverse square root.
    """
    if model.flat:
        return U
    g = model.metric(x)
    S = np.swapaxes(U, -1, -2) @ (g @ U)
    D = S - np.eye(model.dim)
    dev = np.sqrt(np.einsum("...ij,...ij->...", D, D))
    worst = float(np.max(dev)) if dev.size else 0.0
    if worst <= tol:
        return U
    if worst < 0.1:
        U = 0.5 * U @ (2.0 * np.eye(model.dim) - D)
        S = np.swapaxes(U, -1, -2) @ (g @ U)
        return 0.5 * U @ (3.0 * np.eye(model.dim) - S)
    return U @ inv_sqrt_spd(S)


class ReflectingSimulator:
    """Vectorized Euler scheme with specular reflection.

    Args:
        model: Geometry of the manifold.
        x0: Start point in chart coordinates.
        n_paths: Batch size.
        T: Horizon.
        dt: Requested step; the actual step is T / ceil(T / dt).
        rng: numpy Generator owned by this batch.
        contact: ``"crossing"`` flags only steps that end outside the domain;
            ``"bridge"`` also flags steps whose Brownian bridge touches the
            boundary (with zero local-time increment).
    """

    def __init__(self, model, x0, n_paths, T, dt, rng, contact="crossing"):
        self.model = model
        self.x0 = np.asarray(x0, float).reshape(model.dim)
        if model.boundary_fn(self.x0) < 0:
            raise ValueError("start point lies outside the domain")
        self.n_paths = int(n_paths)
        self.T = float(T)
        self.n_steps = n_steps_for(T, dt)
        self.dt = self.T / self.n_steps if self.n_steps else float(dt)
        self.rng = rng
        if contact not in ("crossing", "bridge"):
            raise ValueError("contact must be 'crossing' or 'bridge'")
        self.contact = contact
        self.U0 = model.frame0(self.x0)
        self.x = None
        self.U = None

    def initial_state(self):
        d = self.model.dim
        x = np.broadcast_to(self.x0, (self.n_paths, d)).copy()
        U = np.broadcast_to(self.U0, (self.n_paths, d, d)).copy()
        return x, U

    def steps(self):
        """Yield :class:`Step` records; the final state is kept on ``self``."""
        m = self.model
        d = m.dim
        x, U = self.initial_state()
        self.x, self.U = x, U
        dt = self.dt
        sq = math.sqrt(dt)
        has_drift = m.drift_K != 0.0
        for k in range(self.n_steps):
            dB = self.rng.standard_normal((self.n_paths, d)) * sq
            dx = (U @ dB[..., None])[..., 0]
            if has_drift:
                dx += 0.5 * m.drift(x) * dt
            if m.has_ito_drift:
                dx += m.ito_drift(x) * dt
            x1 = x + dx
            U1 = transport_frame(m, U, x, dx)
            b1 = m.boundary_fn(x1)
            hit = b1 < 0
            dl = np.zeros(self.n_paths)
            xb = np.full_like(x1, np.nan)
            if np.any(hit):
                xo = x1[hit]
                xr, pushed = m.reflect(xo)
                dl[hit] = 2.0 * pushed
                xb[hit] = m.project_to_boundary(xo)
                U1[hit] = transport_frame(m, U1[hit], xo, xr - xo)
                x1[hit] = xr
            if self.contact == "bridge":
                b0 = m.boundary_fn(x)
                p = np.exp(-2.0 * np.maximum(b0, 0) * np.maximum(b1, 0) / dt)
                touch = (~hit) & (self.rng.random(self.n_paths) < p)
                if np.any(touch):
                    hit = hit | touch
                    xb[touch] = m.project_to_boundary(x1[touch])
            U1 = orthonormalize(m, U1, x1)
            if not np.all(m.in_chart(x1)) or not np.all(np.isfinite(U1)):
                raise PathAbort(f"path left the chart at step {k}")
            yield Step(k, k * dt, dt, x, U, dB, x1, U1, dl, hit, xb)
            x, U = x1, U1
            self.x, self.U = x, U


@dataclass
class DiffusionPath:
    """A stored batch of discretized reflecting paths.

    Shapes: ``x`` (S+1, n, d), ``dB`` (S, n, d), ``U`` (S+1, n, d, d),
    ``dl`` and ``hit`` (S, n), ``xb`` (S, n, d).
    """

    model: object
    dt: float
    x: np.ndarray
    dB: np.ndarray
    U: np.ndarray
    dl: np.ndarray
    hit: np.ndarray
    xb: np.ndarray
    seed: int

    @property
    def n_steps(self):
        return self.dB.shape[0]

    @property
    def n_paths(self):
        return self.x.shape[1]

    @property
    def local_time(self):
        """Cumulative local time l at the grid times, shape (S+1, n)."""
        out = np.zeros((self.n_steps + 1, self.n_paths))
        np.cumsum(self.dl, axis=0, out=out[1:])
        return out

    def steps(self):
        for k in range(self.n_steps):
            yield Step(
                k, k * self.dt, self.dt, self.x[k], self.U[k], self.dB[k],
                self.x[k + 1], self.U[k + 1], self.dl[k], self.hit[k], self.xb[k],
            )

    def subset(self, idx):
        return DiffusionPath(
            self.model, self.dt, self.x[:, idx], self.dB[:, idx], self.U[:, idx],
            self.dl[:, idx], self.hit[:, idx], self.xb[:, idx], self.seed,
        )


class PathRecorder:
    """Consumer that stores the first ``keep`` paths of a batch."""

    def __init__(self, keep):
        self.keep = keep
        self.rows = []
        self.x0 = None

    def update(self, st):
        k = self.keep
        if self.x0 is None:
            self.x0 = (st.x[:k].copy(), st.U[:k].copy())
        self.rows.append(
            (st.x_new[:k].copy(), st.dB[:k].copy(), st.U_new[:k].copy(),
             st.dl[:k].copy(), st.hit[:k].copy(), st.xb[:k].copy())
        )

    def to_path(self, model, dt, seed):
        x0, U0 = self.x0
        xs = np.stack([x0] + [r[0] for r in self.rows])
        Us = np.stack([U0] + [r[2] for r in self.rows])
        return DiffusionPath(
            model, dt, xs, np.stack([r[1] for r in self.rows]), Us,
            np.stack([r[3] for r in self.rows]), np.stack([r[4] for r in self.rows]),
            np.stack([r[5] for r in self.rows]), seed,
        )


def simulate_path(model, x0, T, dt, seed, n_paths=1, block=0, contact="crossing"):
    """Simulate and store ``n_paths`` reflecting paths.

    Args:
        model: Geometry.
        x0: Start point (chart coordinates).
        T: Horizon; T = 0 yields a path with no steps.
        dt: Step size; dt > T gives a single step of size T.
        seed: Master seed.
        n_paths: Number of paths stored.
        block: Block index of the RNG stream.

    Returns:
        DiffusionPath
    """
    sim = ReflectingSimulator(model, x0, n_paths, T, dt, block_rng(seed, block), contact)
    if sim.n_steps == 0:
        x, U = sim.initial_state()
        d = model.dim
        return DiffusionPath(
            model, float(dt), x[None], np.zeros((0, n_paths, d)), U[None],
            np.zeros((0, n_paths)), np.zeros((0, n_paths), bool),
            np.zeros((0, n_paths, d)), seed,
        )
    rec = PathRecorder(n_paths)
    for st in sim.steps():
        rec.update(st)
    return rec.to_path(model, sim.dt, seed)


def skorokhod_exact_1d(x0, T, dt, seed, n_paths=1, block=0, full=False):
    """Exact reflected Brownian motion on [0, ∞) via the Skorokhod map.

    Uses X = x0 + W + l/2 with l_t = 2 max(0, -min_{s<=t}(x0 + W_s)), where the
    running minimum between grid points is drawn exactly from the Brownian
    bridge minimum law.  The grid values of (X, l) are therefore exact in law.

    Args:
        full: Return whole trajectories of shape (S+1, n_paths) instead of
            the terminal values only.

    Returns:
        tuple: (X, W, l) at time T, or trajectories when ``full``.
    """
    rng = block_rng(seed, block)
    S = n_steps_for(T, dt)
    h = T / S if S else dt
    w = np.zeros(n_paths)
    runmin = np.zeros(n_paths)
    traj = [(w.copy(), runmin.copy())] if full else None
    for _ in range(S):
        inc = rng.standard_normal(n_paths) * math.sqrt(h)
        u = rng.random(n_paths)
        b = w + inc
        m = 0.5 * (w + b - np.sqrt(inc * inc - 2.0 * h * np.log1p(-u)))
        np.minimum(runmin, m, out=runmin)
        w = b
        if full:
            traj.append((w.copy(), runmin.copy()))
    if full:
        W = np.stack([t[0] for t in traj])
        mn = np.stack([t[1] for t in traj])
    else:
        W, mn = w, runmin
    l = 2.0 * np.maximum(0.0, -(x0 + mn))
    return x0 + W + 0.5 * l, W, l


# ---------------------------------------------------------------------------
# binary trace

_MAGIC = b"NBTR"
_HEADER = struct.Struct("<4sIIdQQ")  # magic, version, d, dt, steps, paths


def write_trace(path, fh):
    """Write a stored path batch as a little-endian binary trace.

    Layout: header ``<4sIIdQQ`` = (b"NBTR", version=1, d, dt, steps, paths),
    the initial records (x, U) per path, then for every step and path the
    record x (d f8), dB (d f8), U (d*d f8, row-major), dl (f8), hit (u1).
    """
    d = path.x.shape[-1]
    fh.write(_HEADER.pack(_MAGIC, 1, d, float(path.dt), path.n_steps, path.n_paths))
    for j in range(path.n_paths):
        fh.write(path.x[0, j].astype("<f8").tobytes())
        fh.write(path.U[0, j].astype("<f8").tobytes())
    for k in range(path.n_steps):
        for j in range(path.n_paths):
            fh.write(path.x[k + 1, j].astype("<f8").tobytes())
            fh.write(path.dB[k, j].astype("<f8").tobytes())
            fh.write(path.U[k + 1, j].astype("<f8").tobytes())
            fh.write(np.float64(path.dl[k, j]).astype("<f8").tobytes())
            fh.write(np.uint8(path.hit[k, j]).tobytes())


def read_trace(fh, model=None):
    magic, version, d, dt, S, n = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != _MAGIC or version != 1:
        raise ValueError("not a path trace")
    x = np.zeros((S + 1, n, d))
    U = np.zeros((S + 1, n, d, d))
    dB = np.zeros((S, n, d))
    dl = np.zeros((S, n))
    hit = np.zeros((S, n), bool)

    def f8(count):
        return np.frombuffer(fh.read(8 * count), dtype="<f8")

    for j in range(n):
        x[0, j] = f8(d)
        U[0, j] = f8(d * d).reshape(d, d)
    for k in range(S):
        for j in range(n):
            x[k + 1, j] = f8(d)
            dB[k, j] = f8(d)
            U[k + 1, j] = f8(d * d).reshape(d, d)
            dl[k, j] = f8(1)[0]
            hit[k, j] = fh.read(1)[0] != 0
    xb = np.full((S, n, d), np.nan)
    return DiffusionPath(model, dt, x, dB, U, dl, hit, xb, -1)

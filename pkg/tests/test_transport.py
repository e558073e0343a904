import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neumann_bismut.geometry import make_model
from neumann_bismut.pathsim import simulate_path
from neumann_bismut.transport import (
    StepGeometry, double_integral_M, envelope_bound, evolve_Q_limit, evolve_Qn,
    evolve_Qtilde, evolve_W, normal_mass,
)

_PATHS = {}


def _path(model_id, x0, T=0.5, dt=2e-3, n=64, seed=3):
    key = (model_id, tuple(x0), T, dt, n, seed)
    if key not in _PATHS:
        _PATHS[key] = simulate_path(make_model(model_id), x0, T, dt, seed, n_paths=n, contact="bridge")
    return _PATHS[key]


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 200.0))
def test_half_line_Qn_is_exponential_of_local_time(n):
    p = _path("half_line", (0.05,))
    Q = evolve_Qn(p, n)[..., 0, 0]
    assert np.allclose(Q, np.exp(-0.5 * n * p.local_time), rtol=1e-12, atol=1e-6)  # stiff steps are clamped


@pytest.mark.parametrize("model_id,x0", [("disk", (0.8, 0.0)), ("hemisphere", (0.85, 0.0)),
                                         ("half_space_2d", (0.0, 0.05))])
@pytest.mark.parametrize("n", [1.0, 10.0, math.inf])
def test_envelope(model_id, x0, n):
    p = _path(model_id, x0)
    Q = evolve_Qn(p, n)
    norm = np.linalg.norm(Q, ord=2, axis=(-2, -1))
    env = envelope_bound(p)
    assert np.all(norm <= env * (1 + 5e-3))


@pytest.mark.parametrize("model_id,x0", [("half_line", (0.05,)), ("disk", (0.8, 0.0)),
                                         ("hemisphere", (0.85, 0.0))])
def test_limit_kills_normal_component(model_id, x0):
    p = _path(model_id, x0)
    Q = evolve_Q_limit(p)
    worst = 0.0
    for k, st_ in enumerate(p.steps()):
        sg = StepGeometry(p.model, st_)
        rows = np.flatnonzero(st_.dl[sg.cidx] > 0)
        if len(rows) == 0:
            continue
        N = sg.boundary()["N"][rows]
        NQ = np.einsum("pi,pij->pj", N, Q[k + 1][sg.cidx[rows]])
        worst = max(worst, float(np.max(np.abs(NQ))))
    assert worst < 1e-6


@pytest.mark.parametrize("model_id,x0", [("disk", (0.8, 0.0)), ("hemisphere", (0.85, 0.0))])
def test_qtilde_inverse_residual(model_id, x0):
    p = _path(model_id, x0)
    _, _, res = evolve_Qtilde(p)
    assert res.max() < 1e-6


@pytest.mark.parametrize("model_id,x0", [("half_line", (0.05,)), ("disk", (0.8, 0.0))])
@pytest.mark.parametrize("n", [2.0, 5.0])
def test_inverse_route_matches_recursion(model_id, x0, n):
    p = _path(model_id, x0)
    h = lambda t: -2.0  # noqa: E731  (T = 0.5)
    a = double_integral_M(p, h, n, method="recursive")
    b = double_integral_M(p, h, n, method="inverse")
    ok = ~b.rejected
    assert ok.mean() > 0.99
    assert np.allclose(a.M[ok], b.M[ok], atol=1e-8)


def test_inverse_route_rejects_stiff_steps():
    p = _path("half_line", (0.05,))
    n = 200.0
    b = double_integral_M(p, lambda t: -2.0, n, method="inverse")
    stiff = np.any(n * p.dl > 30.0, axis=0)
    assert np.array_equal(b.rejected, stiff | b.rejected)
    assert np.all(b.M[b.rejected] == 0.0)


def test_inverse_route_rejects_infinite_n():
    p = _path("half_line", (0.05,))
    with pytest.raises(ValueError):
        double_integral_M(p, lambda t: -1.0, math.inf, method="inverse")


@pytest.mark.parametrize("n", [1.0, 10.0, 100.0])
def test_normal_mass_corrected_form(n):
    """∫|P_N Q v|² dl ≤ (|v|² + ∫|Qv|²(K⁻ds + σ⁻dl)) / n on flat convex models."""
    for model_id, x0 in (("half_line", (0.05,)), ("disk", (0.8, 0.0))):
        p = _path(model_id, x0)
        Q = evolve_Qn(p, n)
        v = np.zeros(p.model.dim)
        v[0] = 1.0
        lhs = normal_mass(p, Q, v, n)[-1]
        assert np.all(lhs <= 1.0 / n + 1e-12)


def test_normal_mass_printed_form_fails_on_half_line():
    """Without the |v|²/n term the inequality fails once local time accrues."""
    p = _path("half_line", (0.05,))
    n = 10.0
    Q = evolve_Qn(p, n)
    lhs = normal_mass(p, Q, np.ones(1), n)[-1]
    rhs_printed = 0.0  # K = σ = 0 on the half-line
    assert np.any(lhs > rhs_printed)


def test_W_vanishes_on_flat_convex_free_models():
    p = _path("half_space_2d", (0.0, 0.05))
    W, a = evolve_W(p, np.array([1.0, 0.0]))
    assert np.allclose(W, 0.0)
    assert np.allclose(a[-1], np.array([1.0, 0.0]))


def test_W_curvature_source_on_hemisphere():
    p = _path("hemisphere", (0.0, 0.0), T=0.2)
    W, _ = evolve_W(p, np.array([1.0, 0.0]))
    assert np.all(np.isfinite(W))
    assert np.abs(W[-1]).max() > 0

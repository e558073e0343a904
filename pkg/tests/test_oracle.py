import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neumann_bismut.functions import make_function
from neumann_bismut.geometry import Hemisphere, make_model
from neumann_bismut.oracle import (
    Grid1D, ImageOracle, OracleError, hemisphere_legendre, make_oracle, mehler, oracle_grad,
    oracle_hess, oracle_Lf, oracle_value,
)

HALF_LINE = make_model("half_line")
SQ = make_function("sq")
GAUSS = make_function("gauss:1")


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.05, 2.0))
def test_image_half_line_square(x, t):
    o = make_oracle(HALF_LINE)
    assert oracle_value(o, SQ, [x], t) == pytest.approx(x * x + t, abs=1e-10)


def test_image_derivatives_exact():
    o = make_oracle(HALF_LINE)
    assert oracle_value(o, SQ, [0.3], 1.0) == pytest.approx(1.09, abs=1e-12)
    assert oracle_grad(o, SQ, [0.3], 1.0, [1.0]) == pytest.approx(0.6, abs=1e-8)
    assert oracle_hess(o, SQ, [0.3], 1.0, [1.0]) == pytest.approx(2.0, abs=1e-8)
    for route in ("temporal", "spatial"):
        assert oracle_Lf(o, SQ, [0.3], 1.0, route) == pytest.approx(2.0, abs=1e-8)


@pytest.mark.parametrize("model_id,x", [("half_line", [0.4]), ("half_space_2d", [0.1, 0.2]),
                                        ("disk", [0.3, 0.0]), ("hemisphere", [0.3, 0.0])])
def test_time_zero_returns_f(model_id, x):
    m = make_model(model_id)
    f = make_function("costheta" if model_id == "hemisphere" else "gauss:1")
    assert oracle_value(make_oracle(m), f, x, 0.0) == pytest.approx(float(f(np.array(x))), abs=1e-12)


def test_symmetric_function_has_zero_gradient():
    o = make_oracle(make_model("half_space_2d"))
    f = make_function("gauss:1")
    assert abs(o.grad(f, [0.0, 0.5], 0.3, [1.0, 0.0])) < 1e-10


def test_image_neumann_condition():
    o = make_oracle(make_model("half_space_2d"))
    assert abs(o.grad(GAUSS, [0.2, 0.0], 0.5, [0.0, 1.0])) < 1e-10


def test_step_below_resolution_rejected():
    o = make_oracle(HALF_LINE)
    with pytest.raises(OracleError):
        o.grad(SQ, [0.3], 1.0, [1.0], h=1e-7)
    with pytest.raises(OracleError):
        make_oracle(make_model("disk"), kind="image")


def test_grid_convergence_against_image():
    ref = make_oracle(HALF_LINE).value(GAUSS, [0.3], 1.0)
    errs = []
    for n, dt in ((300, 1e-2), (600, 5e-3)):
        o = make_oracle(HALF_LINE, kind="grid", n_cells=n, dt=dt)
        errs.append(abs(o.value(GAUSS, [0.3], 1.0) - ref))
    assert errs[0] / errs[1] >= 3.5


@pytest.mark.parametrize("weight,L", [(np.sin, 0.5 * math.pi), (np.abs, 1.0), (np.ones_like, 12.0)])
def test_grid_conservation_and_neumann(weight, L):
    g = Grid1D(weight, L, 2000, 1e-3)
    slices, _ = g.solve(np.cos(math.pi * g.s / L) ** 2 + 0.2 * g.s / L, 0.5)
    assert abs(g.mass(slices[-1]) - g.mass(slices[0])) < 1e-10 * max(1.0, abs(g.mass(slices[0])))
    assert g.neumann_residual(slices[-1]) < 1e-8


def test_grid_semigroup_property():
    g = Grid1D(np.sin, 0.5 * math.pi, 2000, 1e-3)
    u0 = np.cos(g.s) ** 3
    full, _ = g.solve(u0, 0.5)
    half, _ = g.solve(u0, 0.2)
    rest, _ = g.solve(half[-1], 0.3)
    assert np.max(np.abs(full[-1] - rest[-1])) < 1e-6


def test_hemisphere_grid_matches_legendre():
    m = make_model("hemisphere")
    f = make_function("costheta")
    o = make_oracle(m, T_max=0.5)
    for th in (0.0, 0.4, 1.0, 1.5):
        x = Hemisphere.chart_point(th)
        ref = hemisphere_legendre(lambda mu: mu, th, 0.5)
        assert o.value(f, x, 0.5) == pytest.approx(ref, abs=1e-5)
    # Hessian at the pole in the orthonormal frame: ∂²_θ of the series
    ref2 = hemisphere_legendre(lambda mu: mu, 0.0, 0.5, nu=2)
    assert o.hess(f, [0.0, 0.0], 0.5, [1.0, 0.0]) == pytest.approx(ref2, abs=1e-4)


def test_spatial_and_temporal_generator_agree():
    m = make_model("hemisphere")
    f = make_function("costheta")
    o = make_oracle(m, T_max=0.5)
    x = Hemisphere.chart_point(0.7)
    assert o.Lf(f, x, 0.3, "temporal") == pytest.approx(o.Lf(f, x, 0.3, "spatial"), abs=1e-4)


def test_ou_grid_matches_mehler_image():
    m = make_model("half_line", drift_K=1.0)
    grid = make_oracle(m, kind="grid")
    img = make_oracle(m)
    assert grid.value(GAUSS, [0.4], 0.7) == pytest.approx(img.value(GAUSS, [0.4], 0.7), abs=1e-6)


def test_mehler_invariance():
    # the OU semigroup fixes constants and maps x ↦ e^{-Kt/2} x
    assert mehler(lambda y: np.ones_like(y), 0.7, 0.5, 2.0) == pytest.approx(1.0)
    assert mehler(lambda y: y, 0.7, 0.5, 2.0) == pytest.approx(0.7 * math.exp(-0.5), abs=1e-12)


def test_image_3d_is_product():
    o3 = ImageOracle(3)
    o1 = ImageOracle(1)
    x = [0.2, -0.1, 0.3]
    val = o3.value(GAUSS, x, 0.4)
    free = 1.0 / math.sqrt(1.0 + 2.0 * 0.4)
    expected = free ** 2 * math.exp(-(0.04 + 0.01) / 1.8) * o1.value(GAUSS, [0.3], 0.4)
    assert val == pytest.approx(expected, rel=1e-8)

import math

import numpy as np
import pytest

from neumann_bismut.estimators import (
    estimate_gradient, estimate_hessian, estimate_hessian_gradform, estimate_local_time_moments,
    estimate_LPf, estimate_M_statistics, estimate_semigroup,
)
from neumann_bismut.functions import make_function
from neumann_bismut.geometry import make_model
from neumann_bismut.oracle import make_oracle
from neumann_bismut.schedules import make_schedule

HALF_LINE = make_model("half_line")


def _close(est, ref, k=4.0):
    return abs(est.value - ref) <= k * est.std_error


def test_semigroup_half_line_calibration():
    e = estimate_semigroup(HALF_LINE, "sq", [0.0], 1.0, N=20_000, dt=1e-3, seed=1)
    assert _close(e, 1.0)


def test_same_seed_same_samples():
    a = estimate_gradient(HALF_LINE, "sq", [0.5], [1.0], 0.5, N=2000, dt=1e-2, seed=5)
    b = estimate_gradient(HALF_LINE, "sq", [0.5], [1.0], 0.5, N=2000, dt=1e-2, seed=5)
    c = estimate_gradient(HALF_LINE, "sq", [0.5], [1.0], 0.5, N=2000, dt=1e-2, seed=6)
    assert np.array_equal(a.samples, b.samples)
    assert not np.array_equal(a.samples, c.samples)


@pytest.mark.parametrize("formula", ["grad13", "grad14"])
def test_gradient_half_line(formula):
    e = estimate_gradient(HALF_LINE, "sq", [0.5], [1.0], 1.0, N=20_000, dt=1e-3, seed=2,
                          formula=formula)
    assert _close(e, 1.0)


def test_lpf_half_line():
    e = estimate_LPf(HALF_LINE, "sq", [0.5], 1.0, N=20_000, dt=1e-3, seed=2)
    assert _close(e, 2.0)
    assert e.n_rejected == 0


@pytest.mark.parametrize("fn", [estimate_hessian, estimate_hessian_gradform])
def test_interior_hessian_flat(fn):
    """Far from the boundary both Hessian representations reduce to the free ones."""
    m = make_model("half_space_2d")
    f = make_function("gauss:0.1")
    x0, v, T = [0.3, 4.0], [1.0, 0.0], 0.2
    ref = make_oracle(m).hess(f, x0, T, v)
    e = fn(m, f, x0, v, T, N=40_000, dt=1e-2, seed=3)
    assert _close(e, ref)


def test_hemisphere_hessian_short_time():
    m = make_model("hemisphere")
    f = make_function("costheta")
    ref = make_oracle(m, T_max=0.05, n_cells=800, dt=5e-4).hess(f, [0.0, 0.0], 0.05, [1.0, 0.0])
    e = estimate_hessian_gradform(m, f, [0.0, 0.0], [1.0, 0.0], 0.05, N=20_000, dt=1e-3, seed=1)
    assert _close(e, ref)


def test_local_time_moments_half_line():
    res = estimate_local_time_moments(HALF_LINE, [0.0], 1.0, N=20_000, dt=1e-3, seed=4,
                                      lambdas=(0.0, 1.0))
    el = 2.0 * math.sqrt(2.0 / math.pi)
    assert _close(res["l"], el)
    assert _close(res["l2"], 4.0)  # E l_1² = 4 E M_1² = 4
    assert res["exp(0l)"].value == 1.0
    assert res["int(0)^2"].value == pytest.approx(res["l2"].value)
    assert res["mixed(1)"].value > res["l"].value


def test_M_statistics_without_boundary():
    T = 1.0
    h = make_schedule("constant", T)
    res = estimate_M_statistics(make_model("half_line"), [20.0], T, h, N=20_000, dt=1e-2, seed=2)
    assert _close(res["M"], 0.0)
    assert _close(res["M2"], 1.0 / (2 * T * T))
    assert res["C"].value == pytest.approx(1.0 / T)

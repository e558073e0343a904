import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from neumann_bismut.stein import (
    MeasurePair, check_debruijn, check_HSI, check_stein_identity, fisher_along_flow,
    fisher_information, hsi_general_rhs, hsi_rhs, relative_entropy, stein_discrepancy,
    stein_kernel, sweep_HSI, tensorization,
)


def test_spot_value():
    r = check_HSI(MeasurePair(n=1, K=1.0, c2=2.0))
    assert r.H == pytest.approx(0.15343, abs=1e-5)
    assert r.hsi == pytest.approx(0.20273, abs=1e-5)
    assert r.margin == pytest.approx(0.0493, abs=1e-4)


def test_sweep_passes():
    for r in sweep_HSI():
        assert r.passed, r.as_row()
        assert r.hsi <= r.lsi + 1e-15


def test_degenerate_point():
    r = check_HSI(MeasurePair(c2=1.0))
    assert r.degenerate and r.passed


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 6.0), st.floats(0.3, 3.0), st.integers(1, 3))
def test_hsi_holds_for_gaussians(c2, K, n):
    r = check_HSI(MeasurePair(n=n, K=K, c2=c2))
    assert r.H <= r.hsi + 1e-12
    assert r.hsi <= r.lsi + 1e-12


@pytest.mark.parametrize("c2", [0.5, 2.0])
def test_closed_forms_match_quadrature(c2):
    p = MeasurePair(n=1, K=1.3, c2=c2)
    assert relative_entropy(p, "quadrature") == pytest.approx(relative_entropy(p), rel=1e-9)
    assert fisher_information(p, "quadrature") == pytest.approx(fisher_information(p), rel=1e-9)


def test_stein_identity_and_kernel():
    p = MeasurePair(n=2, K=1.0, c2=1.7)
    assert np.allclose(stein_kernel(p), 1.7 * np.eye(2))
    assert check_stein_identity(p, count=10, seed=3) < 1e-10
    assert stein_discrepancy(p) ** 2 == pytest.approx(2 * 0.7 ** 2)


def test_mixture_has_no_kernel():
    p = MeasurePair(family="mixture", shift=1.0, c2=0.5)
    assert math.isinf(stein_discrepancy(p))
    assert check_HSI(p).hsi == math.inf


def test_tensorization():
    rows = tensorization(2.0, 1.0, (1, 2, 3))
    _, H1, I1, S1 = rows[0]
    for n, H, I, S2 in rows:
        assert H == pytest.approx(n * H1, rel=1e-8)
        assert I == pytest.approx(n * I1, rel=1e-8)
        assert S2 == pytest.approx(n * S1, rel=1e-12)


def test_general_rhs_reduces_to_flat_case():
    # α = β = 0 makes C = 0 and case ii gives the flat right side with S² (1 + 1/ε)
    eps = 1e6
    assert hsi_general_rhs(1.0, 2.0, 1, 1.0, 0.0, 0.0, eps) == pytest.approx(hsi_rhs(2.0, 1.0, 1.0), rel=1e-5)


def test_fisher_flow_endpoints():
    p = MeasurePair(c2=2.0)
    assert fisher_along_flow(p, 0.0) == pytest.approx(fisher_information(p), rel=1e-8)
    assert fisher_along_flow(p, 30.0) < 1e-10


@pytest.mark.parametrize("pair", [MeasurePair(c2=0.5), MeasurePair(c2=4.0),
                                  MeasurePair(family="mixture", shift=1.0, c2=0.5)])
def test_debruijn_closes(pair):
    r = check_debruijn(pair)
    assert r.rel_error < 0.01
    assert r.decay_ok
    assert r.stein_decay_ok


def test_invalid_pairs():
    with pytest.raises(ValueError):
        MeasurePair(c2=0.0)
    with pytest.raises(ValueError):
        MeasurePair(K=-1.0)

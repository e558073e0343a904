"""Test functions f with their chart differentials.

Each entry evaluates f and its chart gradient ∂f (so that df(w) = ∂f · w for
a chart vector w).  Names follow the CLI syntax ``sq``, ``coord:i``,
``costheta``, ``gauss:a`` and ``const:c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class TestFunction:
    name: str
    f: Callable
    grad: Callable
    bounded: bool = False
    sup: float = np.inf

    def __call__(self, x):
        return self.f(np.asarray(x, float))

    def df(self, x, w):
        return np.sum(self.grad(np.asarray(x, float)) * w, axis=-1)


TestFunction.__test__ = False  # not a pytest class


def _sq():
    return TestFunction(
        "sq",
        lambda x: np.sum(x * x, axis=-1),
        lambda x: 2.0 * x,
    )


def _coord(i):
    def f(x):
        return x[..., i].copy()

    def g(x):
        out = np.zeros_like(x)
        out[..., i] = 1.0
        return out

    return TestFunction(f"coord:{i}", f, g)


def _costheta():
    def f(x):
        r2 = np.sum(x * x, axis=-1)
        return (1.0 - r2) / (1.0 + r2)

    def g(x):
        r2 = np.sum(x * x, axis=-1)
        return (-4.0 / (1.0 + r2) ** 2)[..., None] * x

    return TestFunction("costheta", f, g, bounded=True, sup=1.0)


def _gauss(a):
    def f(x):
        return np.exp(-a * np.sum(x * x, axis=-1))

    def g(x):
        return (-2.0 * a * f(x))[..., None] * x

    return TestFunction(f"gauss:{a:g}", f, g, bounded=True, sup=1.0)


def _const(c):
    return TestFunction(
        f"const:{c:g}",
        lambda x: np.full(x.shape[:-1], float(c)),
        lambda x: np.zeros_like(x),
        bounded=True,
        sup=abs(c),
    )


def make_function(spec, dim=None):
    """Parse a CLI function specification.

    Args:
        spec: ``sq``, ``coord:i``, ``costheta``, ``gauss:a`` or ``const:c``.
        dim: Chart dimension, used to validate ``coord:i``.
    """
    if isinstance(spec, TestFunction):
        return spec
    name, _, arg = str(spec).partition(":")
    if name == "sq":
        return _sq()
    if name == "coord":
        i = int(arg or 0)
        if dim is not None and not 0 <= i < dim:
            raise ValueError(f"coord index {i} out of range for dimension {dim}")
        return _coord(i)
    if name == "costheta":
        return _costheta()
    if name == "gauss":
        return _gauss(float(arg or 1.0))
    if name == "const":
        return _const(float(arg or 1.0))
    raise ValueError(f"unknown test function {spec!r}")


def square_of(fn: TestFunction) -> TestFunction:
    """f² with its differential."""
    return TestFunction(
        f"({fn.name})^2",
        lambda x: fn.f(x) ** 2,
        lambda x: 2.0 * fn.f(x)[..., None] * fn.grad(x),
        bounded=fn.bounded,
        sup=fn.sup**2,
    )


def grad_norm_sq(fn: TestFunction, model) -> Callable:
    """x ↦ |∇f|²_g(x) = ∂f^T g^{-1} ∂f."""

    def h(x):
        x = np.asarray(x, float)
        df = fn.grad(x)
        return np.einsum("...i,...ij,...j->...", df, model.metric_inv(x), df)

    return h

"""Deterministic weight schedules h on [0, T].

The second-order formulas use h with ∫_0^T h = -1 and h̃(t) = 1 + ∫_0^t h,
so h̃(0) = 1 and h̃(T) = 0.  The first-order formula uses a ramp g with
g(0) = 0, g(T) = 1 through its derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class HSchedule:
    """A weight schedule.

    Attributes:
        kind: ``constant`` (h = -1/T), ``exponential`` (h(s) =
            -e^{Ks} / ∫_0^T e^{Kr} dr), ``ramp`` (g(s) = s/T, used by the
            first-order formula) or ``tabulated``.
        T: Horizon.
        K: Rate of the exponential schedule.
        grid: Tabulated times (``tabulated`` only).
        values: Tabulated h values on ``grid``.
    """

    kind: str
    T: float
    K: float = 0.0
    grid: tuple = field(default=(), repr=False)
    values: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("schedule horizon must be positive")
        if self.kind not in ("constant", "exponential", "ramp", "tabulated"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "tabulated":
            g = np.asarray(self.grid, float)
            v = np.asarray(self.values, float)
            if g.shape != v.shape or g.size < 2 or g[0] > 0 or g[-1] < self.T:
                raise ValueError("tabulated schedule must cover [0, T]")
            total = float(np.trapezoid(v, g))
            if abs(total + 1.0) > 1e-6:
                raise ValueError(f"tabulated schedule must integrate to -1 (got {total:.6g})")

    @property
    def schedule_id(self):
        if self.kind == "exponential":
            return f"exponential(K={self.K:g})"
        return self.kind

    def _expo_norm(self):
        K, T = self.K, self.T
        return T if abs(K * T) < 1e-12 else math.expm1(K * T) / K

    def h(self, t):
        """Weight h(t)."""
        if self.kind == "constant":
            return -1.0 / self.T
        if self.kind == "exponential":
            return -math.exp(self.K * t) / self._expo_norm()
        if self.kind == "ramp":
            return t / self.T
        return float(np.interp(t, self.grid, self.values))

    def htilde(self, t):
        """h̃(t) = 1 + ∫_0^t h."""
        if self.kind == "constant":
            return 1.0 - t / self.T
        if self.kind == "exponential":
            K = self.K
            part = t if abs(K * t) < 1e-12 else math.expm1(K * t) / K
            return 1.0 - part / self._expo_norm()
        if self.kind == "ramp":
            raise ValueError("h̃ is not defined for the first-order ramp")
        g = np.asarray(self.grid, float)
        v = np.asarray(self.values, float)
        m = g <= t
        gg = np.append(g[m], t)
        vv = np.append(v[m], np.interp(t, g, v))
        return 1.0 + float(np.sum(0.5 * (vv[1:] + vv[:-1]) * np.diff(gg)))

    def dh(self, t):
        """Derivative of the first-order ramp g(s) = s/T."""
        if self.kind != "ramp":
            raise ValueError("dh is only defined for the ramp schedule")
        return 1.0 / self.T

    def l2(self):
        """∫_0^T h² ds."""
        if self.kind == "constant":
            return 1.0 / self.T
        if self.kind == "exponential":
            K, T = self.K, self.T
            if abs(K * T) < 1e-12:
                return 1.0 / T
            return (math.expm1(2 * K * T) / (2 * K)) / self._expo_norm() ** 2
        s = np.linspace(0, self.T, 2001)
        return float(np.trapezoid([self.h(t) ** 2 for t in s], s))


def make_schedule(kind, T, K=0.0):
    """Build a schedule by name (``constant``, ``exponential``, ``ramp``)."""
    return HSchedule(kind=kind, T=float(T), K=float(K))

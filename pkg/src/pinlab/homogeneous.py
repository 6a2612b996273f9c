"""Homogeneous (beta = 0) pinning: critical point, free energy, annealed shift, exponent fit.

For h > h_c the free energy is the unique F > 0 with

    sum_n K(n) exp(-F n) = exp(-h).

Near criticality the equation is solved in the difference form
sum_n K(n) (1 - exp(-F n)) = exp(-h_c) - exp(-h), which keeps full relative
precision when F is of order 1e-15; far from it, log of the sum is matched
against -h.  The tail beyond n_max is integrated with the exponential factor
in place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from pinlab.disorder_env import DisorderSpec, log_mgf
from pinlab.renewal_kernel import Kernel


def critical_point(kernel: Kernel) -> float:
    """h_c = -log P(tau_1 < inf); exactly 0 for recurrent kernels."""
    if kernel.recurrent:
        return 0.0
    return -math.log(kernel.total_mass)


def _n(kernel: Kernel) -> np.ndarray:
    if "n" not in kernel._cache:
        kernel._cache["n"] = np.arange(kernel.n_max + 1, dtype=float)
    return kernel._cache["n"]


def generating_function(kernel: Kernel, F: float) -> float:
    """sum_n K(n) exp(-F n), tail included."""
    n = _n(kernel)
    return float(np.dot(kernel.K[1:], np.exp(-F * n[1:]))) + kernel.tail(F)


def _deficit(kernel: Kernel, F: float) -> float:
    n = _n(kernel)
    head = float(np.dot(kernel.K[1:], -np.expm1(-F * n[1:])))
    return head + kernel.tail(F, damped=False)


def _log_gf(kernel: Kernel, F: float) -> float:
    n = _n(kernel)
    t = kernel.tail(F)
    terms = kernel.log_K[1:] - F * n[1:]
    if t > 0.0:
        return float(np.logaddexp(logsumexp(terms), math.log(t)))
    return float(logsumexp(terms))


def free_energy(kernel: Kernel, h: float, tol: float = 1e-12) -> float:
    """F(h) by bisection; 0 for h <= h_c.

    The bracket is [0, h - h_c] (since the generating function is at most
    P(tau_1 < inf) e^{-F}).  Steps are geometric while the bracket spans
    more than a factor 4, so tiny roots near criticality are resolved to
    relative precision as well as to absolute ``tol``.
    """
    hc = critical_point(kernel)
    if h <= hc:
        return 0.0
    du = h - hc
    near = du < math.log(2.0)
    if near:
        target = kernel.total_mass * -math.expm1(-du)

        def above(F):  # True when F is below the root
            return _deficit(kernel, F) < target
    else:
        def above(F):
            return _log_gf(kernel, F) > -h

    lo, hi = 0.0, du
    floor = hi * 1e-300
    if not above(floor):
        return floor
    lo = floor
    for _ in range(2000):
        if hi - lo <= tol and hi - lo <= tol * hi:
            break
        mid = math.sqrt(lo * hi) if hi > 4.0 * lo else 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if above(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def root_residual(kernel: Kernel, h: float, F: float) -> float:
    """|sum K(n) e^{-F n} - e^{-h}| evaluated in the form the solver used."""
    du = h - critical_point(kernel)
    if du < math.log(2.0):
        return abs(_deficit(kernel, F) - kernel.total_mass * -math.expm1(-du))
    return abs(generating_function(kernel, F) - math.exp(-h))


def annealed_free_energy(kernel: Kernel, disorder: DisorderSpec, beta: float, h: float) -> float:
    """F^a(beta, h) = F(h + lambda(beta))."""
    return free_energy(kernel, h + log_mgf(disorder, beta))


def annealed_critical_point(kernel: Kernel, disorder: DisorderSpec, beta: float) -> float:
    return critical_point(kernel) - log_mgf(disorder, beta)


@dataclass
class FreeEnergyCurve:
    h: np.ndarray
    F: np.ndarray
    alpha: float
    h_c: float
    meta: dict = field(default_factory=dict)

    def check(self, tol: float = 1e-9) -> None:
        """Raise if F is negative, nonzero below h_c, decreasing, or non-convex."""
        order = np.argsort(self.h)
        h, F = self.h[order], self.F[order]
        if np.any(F < 0):
            raise AssertionError("negative free energy")
        if np.any(F[h <= self.h_c] != 0):
            raise AssertionError("positive free energy at or below h_c")
        if np.any(np.diff(F) < -tol):
            raise AssertionError("free energy decreasing in h")
        # second divided differences on a possibly uneven grid
        if len(h) >= 3:
            d1 = np.diff(F) / np.diff(h)
            d2 = np.diff(d1) / (0.5 * (h[2:] - h[:-2]))
            if np.any(d2 < -tol * np.maximum(1.0, np.abs(d2).max())):
                raise AssertionError("free energy not convex")


def free_energy_curve(kernel: Kernel, h_values) -> FreeEnergyCurve:
    h = np.asarray(h_values, dtype=float)
    F = np.array([free_energy(kernel, float(x)) for x in h])
    return FreeEnergyCurve(h, F, kernel.alpha, critical_point(kernel))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def exponent_fit(curve: FreeEnergyCurve, h_c: float, window: tuple[float, float]) -> ExponentFit:
    """Least-squares slope of log F against log(h - h_c) for h - h_c in ``window``."""
    u = curve.h - h_c
    keep = (u >= window[0]) & (u <= window[1]) & (curve.F > 0)
    if keep.sum() < 5:
        raise ValueError(f"exponent_fit needs at least 5 points in window {window}, got {int(keep.sum())}")
    res = stats.linregress(np.log(u[keep]), np.log(curve.F[keep]))
    return ExponentFit(float(res.slope), float(res.stderr), float(res.intercept), int(keep.sum()))


def exponent_curve(kernel: Kernel, window: tuple[float, float], n_points: int = 21) -> FreeEnergyCurve:
    """Free-energy samples log-spaced in h - h_c over ``window``."""
    hc = critical_point(kernel)
    u = np.geomspace(window[0], window[1], n_points)
    return free_energy_curve(kernel, hc + u)

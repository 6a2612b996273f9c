"""The intersection renewal tau' of two independent copies of tau."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from pinlab.renewal_kernel import CONSTANT, Kernel, SlowlyVaryingSpec, renewal_mass

NEGATIVE_TOL = 1e-12
# safety factor on the asymptotic constant when bracketing the tail of sum u_n^2
TAIL_INFLATION = 1.1


class RecurrentIntersection(ValueError):
    def __init__(self, alpha, L):
        super().__init__(f"recurrent intersection: sum u_n^2 diverges for alpha={alpha}, L={L}")


@dataclass(frozen=True, eq=False)
class IntersectionData:
    u_prime: np.ndarray
    K_prime: np.ndarray | None
    m: float
    m_width: float
    p_return: float
    clamped: int = 0

    @property
    def survival(self) -> np.ndarray:
        """P(tau'_1 > n) for n = 0..len-1, including the atom at infinity."""
        s = 1.0 - np.cumsum(self.K_prime)
        s[0] = 1.0
        return np.maximum(s, 0.0)


def intersection_mass(mass: np.ndarray) -> np.ndarray:
    u = np.asarray(mass, dtype=float)
    return u * u


def deconvolve_interarrival(u_prime: np.ndarray, return_clamped: bool = False):
    """K'(n) = u'_n - sum_{k<n} K'(k) u'_{n-k}, forward substitution.

    Entries in (-1e-12, 0) are round-off and are clamped to zero; anything
    more negative means ``u_prime`` is not a renewal sequence.
    """
    u = np.asarray(u_prime, dtype=float)
    if u[0] != 1.0:
        raise ValueError("u'_0 must equal 1")
    n_max = len(u) - 1
    K = np.zeros(n_max + 1)
    urev = np.ascontiguousarray(u[n_max:0:-1])  # urev[n_max-n+k] = u[n-k]
    clamped = 0
    for n in range(1, n_max + 1):
        v = u[n] - (K[1:n] @ urev[n_max - n + 1:n_max] if n > 1 else 0.0)
        if v < 0.0:
            if v < -NEGATIVE_TOL:
                raise ValueError(f"negative inter-arrival mass {v:.3e} at n={n}: input is not a renewal sequence")
            v = 0.0
            clamped += 1
        K[n] = v
    if K.sum() > 1.0 + 1e-9:
        raise ValueError("deconvolved law has mass above one")
    return (K, clamped) if return_clamped else K


def is_transient(alpha: float, L: SlowlyVaryingSpec) -> bool:
    """Analytic test of sum_n P(n in tau)^2 < inf for the implemented families."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if alpha < 0.5:
        return True
    if alpha > 0.5:
        return False
    if L.kind == CONSTANT:
        return False
    return 2.0 * L.p > 1.0


def expected_intersection_count(u_prime: np.ndarray, alpha: float, L: SlowlyVaryingSpec):
    """m = sum_{n>=1} u'_n with the tail beyond the array bracketed.

    ``L`` must be the slowly varying function of the law that produced
    ``u_prime`` (for a normalized kernel, ``kernel.effective_L``).  The tail is
    the integral of the squared Doney asymptote with its constant inflated or
    deflated by 10%; returns (midpoint, bracket width).
    """
    if not is_transient(alpha, L):
        raise RecurrentIntersection(alpha, L)
    u = np.asarray(u_prime, dtype=float)
    n_max = len(u) - 1
    head = math.fsum(u[1:])

    const = alpha * math.sin(math.pi * alpha) / math.pi
    if L.kind == CONSTANT:
        tail = (const / L.c) ** 2 * n_max ** (2.0 * alpha - 1.0) / (1.0 - 2.0 * alpha)
    else:
        log_a = math.log(n_max)

        # x = n_max e^t; integrand doney(x)^2 dx
        def integrand(t):
            log_x = log_a + t
            return const ** 2 * math.exp(-2.0 * L.log_at(log_x) + (2.0 * alpha - 1.0) * log_x)

        tail, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=0.0, epsrel=1e-10, limit=400)
    hi = tail * TAIL_INFLATION ** 2
    lo = tail / TAIL_INFLATION ** 2
    return head + 0.5 * (hi + lo), hi - lo


def return_probability(m: float) -> float:
    """P(tau'_1 < inf) from the expected number of returns of a geometric count."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    return m / (1.0 + m)


def intersection_data(kernel: Kernel, n_max: int | None = None, deconvolve: bool = False) -> IntersectionData:
    """Bundle u', m, p' (and K' when ``deconvolve``) of a transient intersection."""
    n_max = kernel.n_max if n_max is None else int(n_max)
    key = ("intersection", n_max, deconvolve)
    if key not in kernel._cache:
        u2 = intersection_mass(renewal_mass(kernel, n_max))
        m, width = expected_intersection_count(u2, kernel.alpha, kernel.effective_L)
        K, clamped = deconvolve_interarrival(u2, return_clamped=True) if deconvolve else (None, 0)
        kernel._cache[key] = IntersectionData(u2, K, m, width, return_probability(m), clamped)
    return kernel._cache[key]


def interarrival_law(kernel: Kernel, N: int) -> np.ndarray:
    """K'(1..N) of the intersection renewal (exact for the tabulated kernel)."""
    key = ("K_prime", N)
    if key not in kernel._cache:
        u2 = intersection_mass(renewal_mass(kernel, N))
        K = deconvolve_interarrival(u2)
        K.setflags(write=False)
        kernel._cache[key] = K
    return kernel._cache[key]

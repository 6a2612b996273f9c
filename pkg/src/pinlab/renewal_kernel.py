"""Power-law renewal inter-arrival laws K(n) = L(n) / n^(1+alpha).

A `Kernel` is a finite table K(1..n_max) plus a certified estimate of the
mass beyond n_max.  The tail sum is bracketed by the integrals of
L(x) x^(-1-alpha) over [n_max, inf) and [n_max+1, inf); the midpoint is used
and the bracket width is kept as the error certificate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

from pinlab._recursion import online_convolution

CONSTANT = "constant"
LOG_POWER = "log_power"


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """L(n) = c (constant) or L(n) = c * log(n + e)^p (log_power)."""

    kind: str = CONSTANT
    c: float = 1.0
    p: float = 0.0

    def __post_init__(self):
        if self.kind not in (CONSTANT, LOG_POWER):
            raise ValueError(f"unknown slowly varying family {self.kind!r}")
        if not self.c > 0:
            raise ValueError(f"L.c must be positive, got {self.c}")

    def __call__(self, n):
        n = np.asarray(n, dtype=float)
        if self.kind == CONSTANT:
            return np.full_like(n, self.c)
        return self.c * np.log(n + math.e) ** self.p

    def log_at(self, log_x: float) -> float:
        """log L(x) from log x, without forming x (safe for huge x)."""
        if self.kind == CONSTANT:
            return math.log(self.c)
        log_xe = log_x + math.log1p(math.exp(1.0 - log_x)) if log_x > -700 else 1.0
        return math.log(self.c) + self.p * math.log(log_xe)

    def scaled(self, factor: float) -> "SlowlyVaryingSpec":
        return SlowlyVaryingSpec(self.kind, self.c * factor, self.p)

    def to_dict(self) -> dict:
        if self.kind == CONSTANT:
            return {"kind": CONSTANT, "c": self.c}
        return {"kind": LOG_POWER, "c": self.c, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "SlowlyVaryingSpec":
        return cls(d.get("kind", CONSTANT), float(d.get("c", 1.0)), float(d.get("p", 0.0)))


@dataclass(frozen=True)
class KernelSpec:
    alpha: float
    L: SlowlyVaryingSpec = SlowlyVaryingSpec()
    recurrent: bool = True
    n_max: int = 1 << 17
    tail_tolerance: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if int(self.n_max) < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if not self.tail_tolerance > 0:
            raise ValueError("tail_tolerance must be positive")


class TailToleranceError(ValueError):
    """The tail bracket is wider than requested at the given truncation."""

    def __init__(self, width: float, tolerance: float, required_n_max: int):
        self.required_n_max = required_n_max
        super().__init__(
            f"tail bracket width {width:.3e} exceeds tail_tolerance {tolerance:.3e}; "
            f"use n_max >= {required_n_max}"
        )


def tail_integral(alpha: float, L: SlowlyVaryingSpec, a: float, F: float = 0.0, damped: bool = True) -> float:
    """Integral over [a, inf) of L(x) x^(-1-alpha) times e^(-F x) (``damped``)
    or times 1 - e^(-F x) (``damped=False``)."""
    if L.kind == CONSTANT:
        z = F * a
        if F == 0.0:
            val = a ** (-alpha) / alpha if damped else 0.0
        else:
            upper_gamma = special.gamma(1.0 - alpha) * special.gammaincc(1.0 - alpha, z)
            if damped:
                val = (a ** (-alpha) * math.exp(-z) - F ** alpha * upper_gamma) / alpha
            else:
                val = (a ** (-alpha) * -math.expm1(-z) + F ** alpha * upper_gamma) / alpha
        return L.c * val
    if not damped and F == 0.0:
        return 0.0

    log_a = math.log(a)

    # x = a e^t
    def integrand(t):
        log_x = log_a + t
        Fx = F * math.exp(log_x) if F > 0.0 and log_x < 700.0 else (math.inf if F > 0.0 else 0.0)
        w = math.exp(-Fx) if damped else -math.expm1(-Fx)
        return math.exp(L.log_at(log_x) - alpha * log_x) * w

    if F > 0.0 and F * a < 1.0:
        knot = math.log(1.0 / (F * a))
        pieces = [(0.0, knot), (knot, knot + 6.0), (knot + 6.0, math.inf)]
    elif F > 0.0:
        pieces = [(0.0, 6.0), (6.0, math.inf)]
    else:
        pieces = [(0.0, math.inf)]
    total = 0.0
    for lo, hi in pieces:
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)
        total += val
    return total


@dataclass(frozen=True, eq=False)
class Kernel:
    """Tabulated inter-arrival law.

    ``K[n]`` for n = 1..n_max (``K[0] = 0``); ``norm`` is the factor the raw
    weights L(n) n^(-1-alpha) were divided by; ``tail_mass`` and ``tail_width``
    are the normalized tail estimate beyond n_max and its bracket width.
    """

    alpha: float
    L: SlowlyVaryingSpec
    recurrent: bool
    n_max: int
    K: np.ndarray
    norm: float
    tail_mass: float
    tail_width: float
    total_mass: float
    defect: float
    spec: KernelSpec | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def effective_L(self) -> SlowlyVaryingSpec:
        """The slowly varying function of the normalized law, K(n) n^(1+alpha)."""
        return self.L.scaled(1.0 / self.norm)

    @cached_property
    def survival(self) -> np.ndarray:
        """``survival[n] = P(tau_1 > n)`` for n = 0..n_max."""
        s = np.empty(self.n_max + 1)
        s[:-1] = np.cumsum(self.K[:0:-1])[::-1]
        s[-1] = 0.0
        s += self.defect + self.tail_mass
        s[0] = 1.0
        return s

    @cached_property
    def cdf(self) -> np.ndarray:
        """``cdf[n] = P(tau_1 <= n)`` for n = 0..n_max."""
        return np.cumsum(self.K)

    @cached_property
    def log_K(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.K)

    def tail(self, F: float = 0.0, damped: bool = True) -> float:
        """Normalized tail beyond n_max of K(n) e^(-F n) (or K(n)(1 - e^(-F n)))."""
        a = float(self.n_max)
        hi = tail_integral(self.alpha, self.L, a, F, damped)
        lo = tail_integral(self.alpha, self.L, a + 1.0, F, damped)
        return 0.5 * (hi + lo) / self.norm


def raw_weights(alpha: float, L: SlowlyVaryingSpec, n_max: int) -> np.ndarray:
    """Unnormalized weights L(n) / n^(1+alpha), indexed 0..n_max with entry 0 = 0."""
    n = np.arange(n_max + 1, dtype=float)
    w = np.zeros(n_max + 1)
    w[1:] = L(n[1:]) / n[1:] ** (1.0 + alpha)
    return w


def _required_n_max(alpha: float, L: SlowlyVaryingSpec, scale: float, tol: float, start: int) -> int:
    n = max(start, 1)
    while float(L(n)) * n ** (-1.0 - alpha) / scale > tol:
        n *= 2
    return n


def build_kernel(spec: KernelSpec) -> Kernel:
    """Tabulate K for ``spec``.

    Recurrent kernels are normalized so that the table plus the tail estimate
    has mass one.  Non-recurrent kernels keep the raw weights and carry
    ``defect = 1 - sum - tail``; a raw law with mass above one is rejected.
    """
    alpha, L, n_max = spec.alpha, spec.L, int(spec.n_max)
    w = raw_weights(alpha, L, n_max)
    head = math.fsum(w)
    t_hi = tail_integral(alpha, L, float(n_max))
    t_lo = tail_integral(alpha, L, float(n_max + 1))
    tail_raw = 0.5 * (t_hi + t_lo)
    width_raw = t_hi - t_lo
    assert math.isfinite(tail_raw), "tail integral diverged"

    if spec.recurrent:
        norm = head + tail_raw
        width = width_raw / norm
        if width > spec.tail_tolerance:
            raise TailToleranceError(width, spec.tail_tolerance,
                                     _required_n_max(alpha, L, norm, spec.tail_tolerance, n_max))
        K = w / norm
        return Kernel(alpha, L, True, n_max, K, norm, tail_raw / norm, width, 1.0, 0.0, spec)

    total = head + tail_raw
    if total > 1.0:
        raise ValueError(f"raw kernel has mass {total:.6g} > 1; lower L.c or use recurrent=True")
    if width_raw > spec.tail_tolerance * total:
        raise TailToleranceError(width_raw / total, spec.tail_tolerance,
                                 _required_n_max(alpha, L, total, spec.tail_tolerance, n_max))
    return Kernel(alpha, L, False, n_max, w, 1.0, tail_raw, width_raw, total, 1.0 - total, spec)


def tail_probability(kernel: Kernel, n: int) -> float:
    """P(tau_1 > n), including the defect atom at infinity."""
    if not 0 <= n <= kernel.n_max:
        raise ValueError(f"n must lie in [0, {kernel.n_max}], got {n}")
    return float(kernel.survival[n])


def renewal_mass(kernel: Kernel, n_max: int | None = None, method: str = "auto") -> np.ndarray:
    """u_n = P(n in tau) for n = 0..n_max by the renewal equation.

    Plain arithmetic is safe here: u_n lies in [0, 1] and decays only like
    n^(alpha-1).  ``method="auto"`` uses the direct O(n^2) convolution up to
    2^17 points and the FFT divide-and-conquer solver beyond.
    """
    n_max = kernel.n_max if n_max is None else int(n_max)
    if n_max > kernel.n_max:
        raise ValueError(f"n_max={n_max} exceeds kernel truncation {kernel.n_max}")
    if method == "auto":
        method = "direct" if n_max <= (1 << 17) else "fft"
    key = ("u", n_max, method)
    if key not in kernel._cache:
        K = kernel.K[: n_max + 1]
        u = online_convolution(K, K, 1.0, method)
        u[0] = 1.0
        u.setflags(write=False)
        kernel._cache[key] = u
    return kernel._cache[key]


def doney_asymptote(alpha: float, L: SlowlyVaryingSpec, n) -> np.ndarray | float:
    """alpha sin(pi alpha) / (pi L(n) n^(1-alpha))."""
    val = alpha * math.sin(math.pi * alpha) / (math.pi * L(n) * np.asarray(n, dtype=float) ** (1.0 - alpha))
    return float(val) if np.ndim(val) == 0 else val


def stable_scale(kernel: Kernel, k: int) -> float:
    """a_k with k L(a_k) a_k^(-alpha) = 1, by bisection on log a."""
    if k < 1:
        raise ValueError("k must be >= 1")
    alpha, L = kernel.alpha, kernel.L
    if L.kind == CONSTANT:
        return (k * L.c) ** (1.0 / alpha)

    def g(t):
        return math.log(k) + math.log(float(L(math.exp(t)))) - alpha * t

    lo, hi = -50.0, 1.0
    while g(hi) > 0:
        hi *= 2.0
    while g(lo) < 0:
        lo *= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    return math.exp(0.5 * (lo + hi))


def sample_renewal(kernel: Kernel, horizon: int, seed: int) -> list[int]:
    """Contact set tau intersected with [0, horizon], simulated gap by gap.

    Gaps are drawn by inverse CDF on the tabulated law; a uniform landing in
    the tail beyond n_max gets a Pareto gap, and one landing in the defect
    atom ends the walk.
    """
    rng = np.random.default_rng(seed)
    cdf = kernel.cdf
    table_mass = cdf[-1]
    finite_mass = table_mass + kernel.tail_mass
    contacts = [0]
    pos = 0
    while True:
        U = rng.random()
        if U < table_mass:
            gap = int(np.searchsorted(cdf, U, side="right"))
        elif U < finite_mass:
            V = rng.random()
            gap = int(math.ceil(kernel.n_max * (1.0 - V) ** (-1.0 / kernel.alpha)))
        else:
            break
        pos += gap
        if pos > horizon:
            break
        contacts.append(pos)
    return contacts

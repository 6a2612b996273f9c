"""Disorder laws (centered, unit variance), environments, and the beta_2 threshold."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
UNIFORM = "uniform"
FAMILIES = (GAUSSIAN, RADEMACHER, UNIFORM)
_SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class DisorderSpec:
    family: str = GAUSSIAN
    seed_base: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown disorder family {self.family!r}; expected one of {FAMILIES}")


@dataclass(frozen=True, eq=False)
class Environment:
    omega: np.ndarray  # omega[0] is padding; sites are 1..N
    spec: DisorderSpec
    sample_index: int

    @property
    def N(self) -> int:
        return len(self.omega) - 1

    def prefix(self, N: int) -> "Environment":
        if N > self.N:
            raise ValueError(f"environment has only {self.N} sites")
        return Environment(self.omega[: N + 1], self.spec, self.sample_index)


def generator(seed_base: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream: Philox keyed by a hash of (seed_base, sample_index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed_base), int(sample_index)])))


def draw(family: str, rng: np.random.Generator, size) -> np.ndarray:
    if family == GAUSSIAN:
        return rng.standard_normal(size)
    if family == RADEMACHER:
        return np.where(rng.random(size) < 0.5, -1.0, 1.0)
    if family == UNIFORM:
        return rng.uniform(-_SQRT3, _SQRT3, size)
    raise ValueError(f"unknown disorder family {family!r}")


def sample_environment(spec: DisorderSpec, N: int, sample_index: int) -> Environment:
    """omega_1..omega_N for one sample index; prefixes agree across N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    omega = np.empty(N + 1)
    omega[0] = 0.0
    omega[1:] = draw(spec.family, generator(spec.seed_base, sample_index), N)
    omega.setflags(write=False)
    return Environment(omega, spec, sample_index)


def environment_matrix(spec: DisorderSpec, N: int, indices) -> np.ndarray:
    """Stack of ``omega`` arrays (with the padding column) for several sample indices."""
    return np.stack([sample_environment(spec, N, int(i)).omega for i in indices])


def log_mgf(spec: DisorderSpec | str, beta):
    """lambda(beta) = log E exp(beta omega_1)."""
    family = spec.family if isinstance(spec, DisorderSpec) else spec
    b = np.asarray(beta, dtype=float)
    if family == GAUSSIAN:
        out = 0.5 * b * b
    elif family == RADEMACHER:
        a = np.abs(b)
        out = a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)
    elif family == UNIFORM:
        s = np.abs(_SQRT3 * b)
        small = s < 1e-3
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            big = s - np.log(2.0 * s) + np.log1p(-np.exp(-2.0 * s))
        s2 = s * s
        out = np.where(small, s2 / 6.0 - s2 * s2 / 180.0, big)
    else:
        raise ValueError(f"unknown disorder family {family!r}")
    return float(out) if out.ndim == 0 else out


def moment_gap(spec: DisorderSpec | str, beta):
    """lambda(2 beta) - 2 lambda(beta): the per-intersection exponent of E[Z^2]."""
    return log_mgf(spec, 2.0 * np.asarray(beta, dtype=float)) - 2.0 * log_mgf(spec, beta)


def gap_supremum(spec: DisorderSpec | str) -> float:
    family = spec.family if isinstance(spec, DisorderSpec) else spec
    return math.log(2.0) if family == RADEMACHER else math.inf


def solve_gap(spec: DisorderSpec | str, target: float) -> float:
    """Smallest beta >= 0 with moment_gap(beta) = target (inf if unreachable)."""
    if target <= 0.0:
        return 0.0
    if target >= gap_supremum(spec):
        return math.inf
    lo, hi = 0.0, 1.0
    while moment_gap(spec, hi) < target:
        lo, hi = hi, 2.0 * hi
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if moment_gap(spec, mid) < target:
            lo = mid
        else:
            hi = mid
    return lo if abs(moment_gap(spec, lo) - target) <= abs(moment_gap(spec, hi) - target) else hi


def beta2(spec: DisorderSpec, kernel, n_max: int | None = None) -> float:
    """Second-moment threshold: inf{beta : gap(beta) > -log P(tau'_1 < inf)}.

    Returns 0 when the intersection renewal is recurrent and +inf when the
    gap of the family never reaches -log p' (Rademacher with p' < 1/2).
    """
    from pinlab.intersection import intersection_data, is_transient

    if not kernel.recurrent:
        raise ValueError("beta2 expects a recurrent kernel; normalize the law first")
    if not is_transient(kernel.alpha, kernel.L):
        return 0.0
    p = intersection_data(kernel, n_max).p_return
    return solve_gap(spec, -math.log(p))

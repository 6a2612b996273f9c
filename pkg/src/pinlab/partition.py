"""Per-environment partition functions in the log domain, the brute-force oracle,
quenched estimates, the critical-point martingale and its exact second moment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from pinlab._recursion import shifted_lse_recursion
from pinlab.disorder_env import DisorderSpec, Environment, environment_matrix, log_mgf, moment_gap
from pinlab.intersection import intersection_data, interarrival_law, is_transient
from pinlab.renewal_kernel import Kernel

BRUTE_FORCE_MAX = 20


@dataclass(frozen=True, eq=False)
class LogPartitionArrays:
    log_Zc: np.ndarray
    log_Z: np.ndarray | None
    beta: float
    h: float
    sample_index: int | None = None

    @property
    def N(self) -> int:
        return len(self.log_Zc) - 1


def _check_N(kernel: Kernel, N: int):
    if N > kernel.n_max:
        raise ValueError(f"N={N} exceeds kernel truncation n_max={kernel.n_max}")


def _site_rewards(omega: np.ndarray, beta: float, h: float, N: int) -> np.ndarray:
    """a[n] = beta omega_n + h for n = 1..N (a[0] = 0); works on stacked rows."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] < N + 1:
        raise ValueError(f"environment shorter than N={N}")
    a = beta * omega[..., : N + 1] + h
    a[..., 0] = 0.0
    return a


def log_partition_batch(kernel: Kernel, omegas: np.ndarray, beta: float, h: float, N: int | None = None,
                        free: bool = True):
    """log Zc (and log Z) for n = 0..N for every row of ``omegas`` at once.

    Returns arrays of shape (S, N+1); the free array is None when ``free`` is
    false.
    """
    omegas = np.atleast_2d(omegas)
    N = omegas.shape[1] - 1 if N is None else int(N)
    _check_N(kernel, N)
    a = _site_rewards(omegas, beta, h, N)
    if free:
        return shifted_lse_recursion(kernel.K, N, 0.0, post=a, free_tail=kernel.survival[: N + 1])
    return shifted_lse_recursion(kernel.K, N, 0.0, post=a), None


def log_partition_constrained(kernel: Kernel, env: Environment, beta: float, h: float,
                              N: int | None = None) -> np.ndarray:
    """log Zc_n for n = 0..N: log Zc_n = beta omega_n + h + LSE_k (log Zc_k + log K(n-k))."""
    N = env.N if N is None else int(N)
    x, _ = log_partition_batch(kernel, env.omega[None, :], beta, h, N, free=False)
    return x[0]


def log_partition_free(kernel: Kernel, log_Zc: np.ndarray, N: int | None = None) -> float:
    """log Z_N by last-contact decomposition: Z_N = sum_k Zc_k P(tau_1 > N-k)."""
    N = len(log_Zc) - 1 if N is None else int(N)
    if N == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        log_T = np.log(kernel.survival[N::-1])
    return float(logsumexp(np.asarray(log_Zc[: N + 1]) + log_T))


def log_partition_arrays(kernel: Kernel, env: Environment, beta: float, h: float,
                         N: int | None = None) -> LogPartitionArrays:
    N = env.N if N is None else int(N)
    x, y = log_partition_batch(kernel, env.omega[None, :], beta, h, N, free=True)
    return LogPartitionArrays(x[0], y[0], beta, h, env.sample_index)


def brute_force_partition(kernel: Kernel, env: Environment, beta: float, h: float, N: int):
    """(log Z_N, log Zc_N) by summing over all 2^N contact sets in [1, N]."""
    if N > BRUTE_FORCE_MAX:
        raise ValueError(f"brute force limited to N <= {BRUTE_FORCE_MAX}, got {N}")
    if N == 0:
        return 0.0, 0.0
    a = _site_rewards(env.omega, beta, h, N)
    logK = kernel.log_K
    logT = np.log(kernel.survival[: N + 1])
    masks = (np.arange(1 << N)[:, None] >> np.arange(N)[None, :]) & 1  # column i <-> site i+1
    w = np.zeros(1 << N)
    last = np.zeros(1 << N, dtype=np.int64)
    for site in range(1, N + 1):
        on = masks[:, site - 1].astype(bool)
        w[on] += logK[site - last[on]] + a[site]
        last[on] = site
    log_Z = logsumexp(w + logT[N - last])
    log_Zc = logsumexp(w[last == N])
    return float(log_Z), float(log_Zc)


@dataclass(frozen=True)
class QuenchedEstimate:
    N: int
    mean: float
    stderr: float
    mean_2N: float | None = None
    stderr_2N: float | None = None
    values: np.ndarray | None = field(default=None, repr=False)


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if len(values) < 2:
        return float(values.mean()), math.nan
    if np.ptp(values) == 0.0:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(len(values)))


def quenched_free_energy(kernel: Kernel, disorder: DisorderSpec, beta: float, h: float, N: int,
                         n_samples: int, seed_base: int | None = None, drift: bool = True,
                         chunk: int = 64) -> QuenchedEstimate:
    """Mean of (1/N) log Zc_N over independent environments, with standard error.

    (1/N) E log Zc_N is a lower bound for the quenched free energy at every N
    by superadditivity; with ``drift`` the same statistic at 2N is reported.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    spec = disorder if seed_base is None else DisorderSpec(disorder.family, seed_base)
    M = 2 * N if drift else N
    _check_N(kernel, M)
    at_N, at_2N = [], []
    if beta == 0.0:
        # the environment drops out: one row stands for every sample
        x, _ = log_partition_batch(kernel, np.zeros((1, M + 1)), 0.0, h, M, free=False)
        at_N.append(np.full(n_samples, x[0, N] / N))
        at_2N.append(np.full(n_samples, x[0, M] / M))
    for start in range(0, n_samples if beta != 0.0 else 0, chunk):
        idx = range(start, min(start + chunk, n_samples))
        x, _ = log_partition_batch(kernel, environment_matrix(spec, M, idx), beta, h, M, free=False)
        at_N.append(x[:, N] / N)
        if drift:
            at_2N.append(x[:, M] / M)
    vals = np.concatenate(at_N)
    mean, se = _mean_se(vals)
    if drift:
        m2, s2 = _mean_se(np.concatenate(at_2N))
        return QuenchedEstimate(N, mean, se, m2, s2, vals)
    return QuenchedEstimate(N, mean, se, values=vals)


def martingale_batch(kernel: Kernel, disorder: DisorderSpec | str, beta: float, omegas: np.ndarray,
                     N: int | None = None) -> np.ndarray:
    """Z_n at h = -lambda(beta) for n = 0..N, one row per environment."""
    if not kernel.recurrent:
        raise ValueError("the critical-point martingale needs a recurrent kernel")
    _, y = log_partition_batch(kernel, omegas, beta, -log_mgf(disorder, beta), N, free=True)
    return np.exp(y)


def martingale_trajectory(kernel: Kernel, disorder: DisorderSpec, beta: float, env: Environment,
                          N: int | None = None) -> np.ndarray:
    return martingale_batch(kernel, disorder, beta, env.omega[None, :], N)[0]


def log_second_moment_exact(kernel: Kernel, disorder: DisorderSpec | str, beta: float, N: int) -> np.ndarray:
    """log E[Z_n^2] at h = -lambda(beta) for n = 0..N.

    By Fubini, E[Z_n^2] = E^{x2}[exp(c |tau' cap [1, n]|)] with
    c = lambda(2 beta) - 2 lambda(beta).  Pinned values V_n follow
    V_n = e^c sum_{k<n} V_k K'(n-k) and W_n = sum_k V_k P(tau'_1 > n-k).
    """
    _check_N(kernel, N)
    c = float(moment_gap(disorder, beta))
    if c == 0.0:
        return np.zeros(N + 1)
    Kp = interarrival_law(kernel, N)
    Tp = np.maximum(1.0 - np.cumsum(Kp), 0.0)
    Tp[0] = 1.0
    post = np.full(N + 1, c)
    _, y = shifted_lse_recursion(Kp, N, 0.0, post=post, free_tail=Tp)
    return y[0]


def second_moment_exact(kernel: Kernel, disorder: DisorderSpec | str, beta: float, N: int) -> float:
    return float(np.exp(log_second_moment_exact(kernel, disorder, beta, N)[N]))


def second_moment_limit(kernel: Kernel, disorder: DisorderSpec | str, beta: float,
                        n_max: int | None = None) -> float:
    """W_infinity = (1 - p') / (1 - p' e^c) when p' e^c < 1, else inf.

    The total number of returns of tau' is geometric with parameter p'.
    """
    if not is_transient(kernel.alpha, kernel.L):
        return math.inf if moment_gap(disorder, beta) > 0 else 1.0
    p = intersection_data(kernel, n_max).p_return
    q = p * math.exp(moment_gap(disorder, beta))
    return (1.0 - p) / (1.0 - q) if q < 1.0 else math.inf


@dataclass
class MomentReport:
    N: list
    exact: list
    mc_mean: list
    mc_mean_se: list
    mc_second: list
    mc_second_se: list
    beta: float
    family: str
    n_samples: int

    def within(self, k: float = 3.0) -> bool:
        ok_mean = all(abs(m - 1.0) <= k * s for m, s in zip(self.mc_mean, self.mc_mean_se))
        ok_second = all(abs(m - w) <= k * s for m, w, s in zip(self.mc_second, self.exact, self.mc_second_se))
        return ok_mean and ok_second


def moment_report(kernel: Kernel, disorder: DisorderSpec, beta: float, N_grid, n_samples: int,
                  chunk: int = 256) -> MomentReport:
    """Exact E[Z_N^2] next to Monte Carlo first and second moments of Z_N."""
    N_grid = sorted(int(n) for n in N_grid)
    Nm = N_grid[-1]
    log_W = log_second_moment_exact(kernel, disorder, beta, Nm)
    Z = []
    for start in range(0, n_samples, chunk):
        idx = range(start, min(start + chunk, n_samples))
        Z.append(martingale_batch(kernel, disorder, beta, environment_matrix(disorder, Nm, idx))[:, N_grid])
    Z = np.concatenate(Z)
    r = MomentReport(N_grid, [float(np.exp(log_W[n])) for n in N_grid], [], [], [], [], beta,
                     disorder.family, n_samples)
    for j in range(len(N_grid)):
        m, s = _mean_se(Z[:, j])
        m2, s2 = _mean_se(Z[:, j] ** 2)
        r.mc_mean.append(m)
        r.mc_mean_se.append(s)
        r.mc_second.append(m2)
        r.mc_second_se.append(s2)
    return r


@dataclass
class ComparisonReport:
    sizes: list
    C_by_size: list
    running_C: list
    C: float
    lower_bound_ok: bool
    stable: bool


def comparison_check(kernel: Kernel, envs, beta: float, h: float, N: int, alpha_plus: float,
                     sizes=None) -> ComparisonReport:
    """Check Zc_n <= Z_n and fit the smallest C with
    Z_n <= [1 + C n^(1+alpha_plus) exp(-beta omega_n - h)] Zc_n.

    ``C_by_size`` is the smallest admissible C at each size (max over
    environments); ``running_C`` its running maximum over sizes, which is the
    constant valid for all sizes seen so far.  ``stable`` compares the running
    value at the smallest size of at least N/16 with the final one (factor 2).
    """
    if alpha_plus <= kernel.alpha:
        raise ValueError("alpha_plus must exceed alpha")
    if isinstance(envs, Environment):
        envs = [envs]
    if sizes is None:
        sizes = [n for n in (2 ** np.arange(0, 31)) if n <= N]
    sizes = [int(n) for n in sizes]
    omegas = np.stack([e.omega[: N + 1] for e in envs])
    x, y = log_partition_batch(kernel, omegas, beta, h, N, free=True)
    if np.any(y - x < -1e-12):
        raise AssertionError("constrained partition function exceeds the free one")
    C_by_size = []
    for n in sizes:
        # log of (Z/Zc - 1) / (n^(1+a+) e^{-beta omega_n - h})
        gap = y[:, n] - x[:, n]
        with np.errstate(divide="ignore"):
            log_excess = np.where(gap > 0, np.log(np.expm1(np.maximum(gap, 0.0))), -np.inf)
        logC = log_excess - (1.0 + alpha_plus) * math.log(n) + beta * omegas[:, n] + h
        C_by_size.append(float(np.exp(logC.max())))
    running = [float(v) for v in np.maximum.accumulate(C_by_size)]
    ref = next(i for i, n in enumerate(sizes) if n >= max(1, N // 16))
    stable = running[-1] <= 2.0 * running[ref]
    return ComparisonReport(sizes, C_by_size, running, running[-1], True, bool(stable))

"""The polymer measure P_N^{beta,h,omega} on contact sets: exact sampling,
contact-count laws, contact-fraction experiments and finite-marginal laws."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from pinlab._recursion import shifted_lse_recursion
from pinlab.disorder_env import DisorderSpec, Environment, log_mgf
from pinlab.partition import _check_N, _mean_se, _site_rewards, log_partition_batch
from pinlab.renewal_kernel import Kernel

COUNT_LAW_MAX = 512
MARGINAL_MAX = 16


@dataclass(frozen=True, eq=False)
class BackwardWeights:
    """``log_B[k]``: log partition of the segment (k, N] given a contact at k,
    free right end.  ``log_B[N] = 0`` and ``log_B[0] = log Z_N``."""

    log_B: np.ndarray
    a: np.ndarray  # site rewards beta omega_n + h, a[0] = 0
    beta: float
    h: float

    @property
    def N(self) -> int:
        return len(self.log_B) - 1


def _backward(kernel: Kernel, a: np.ndarray, N: int) -> np.ndarray:
    # mirrored index j = N - k:  b[j] = log(T(j) + sum_{i<j} K(j-i) exp(a_{N-i} + b[i]))
    pre = a[N::-1]
    b = shifted_lse_recursion(kernel.K, N, 0.0, pre=pre, extra=kernel.survival[: N + 1])[0]
    return b[::-1].copy()


def backward_weights(kernel: Kernel, env: Environment, beta: float, h: float, N: int | None = None) -> BackwardWeights:
    N = env.N if N is None else int(N)
    _check_N(kernel, N)
    a = _site_rewards(env.omega, beta, h, N)
    return BackwardWeights(_backward(kernel, a, N), a, beta, h)


def split_identity_gap(kernel: Kernel, weights: BackwardWeights, log_Zc: np.ndarray, s: int) -> float:
    """|log Z_N - log(sum over the last contact k <= s of Zc_k x continuation)|.

    The continuation from a contact at k either jumps to some j > s (weight
    K(j-k) e^{a_j} B_j) or stays unpinned up to N (weight P(tau_1 > N-k)).
    """
    N = weights.N
    a, B = weights.a, weights.log_B
    logK, logT = kernel.log_K, np.log(kernel.survival)
    terms = []
    for k in range(s + 1):
        j = np.arange(s + 1, N + 1)
        cont = np.concatenate([logK[j - k] + a[j] + B[j], [logT[N - k]]])
        terms.append(log_Zc[k] + logsumexp(cont))
    return abs(float(logsumexp(terms)) - float(B[0]))


def sample_path(weights: BackwardWeights, kernel: Kernel, seed: int | np.random.Generator) -> list[int]:
    """Exact draw of tau cap [0, N] under the polymer measure.

    From a contact at k the next contact is j with probability
    K(j-k) e^{a_j} B_j / B_k, and there is no further contact with
    probability P(tau_1 > N-k) / B_k.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    N = weights.N
    a, B = weights.a, weights.log_B
    logK, surv = kernel.log_K, kernel.survival
    path = [0]
    k = 0
    while k < N:
        logits = logK[1:N - k + 1] + a[k + 1:] + B[k + 1:] - B[k]
        p = np.exp(logits)
        stop = surv[N - k] * math.exp(-B[k])
        U = rng.random() * (p.sum() + stop)
        c = np.cumsum(p)
        i = int(np.searchsorted(c, U, side="right"))
        if i >= len(c):
            break
        k = k + 1 + i
        path.append(k)
    return path


@dataclass(frozen=True, eq=False)
class ContactLaw:
    """q[j] = P_N(|tau cap [1, N]| = j).  For capped laws the last entry is
    P(count >= cap)."""

    N: int
    q: np.ndarray
    capped: bool = False

    def mean(self) -> float:
        if self.capped:
            raise ValueError("mean of a capped law is undefined")
        return float(np.dot(np.arange(len(self.q)), self.q))

    def prob_greater(self, x: float) -> float:
        j0 = int(math.floor(x)) + 1
        if self.capped and j0 != len(self.q) - 1:
            raise ValueError("capped law only resolves the event count >= cap")
        return float(self.q[j0:].sum())


def _count_dp(kernel: Kernel, a: np.ndarray, log_Zc: np.ndarray, J: int, upto: int,
              last_weight: np.ndarray) -> np.ndarray:
    """Law of the number of contacts in [1, upto], capped at J.

    ``M[n, j]`` = P(j contacts in [1, n] | the constrained measure pinned at n),
    built from the backward transition probabilities
    w_{n,k} = e^{a_n} Zc_k K(n-k) / Zc_n.  ``last_weight[k]`` is the probability
    that k is the last contact in [0, upto].
    """
    logK = kernel.log_K
    M = np.zeros((upto + 1, J + 1))
    M[0, 0] = 1.0
    for n in range(1, upto + 1):
        w = np.exp(a[n] + log_Zc[:n] + logK[n:0:-1] - log_Zc[n])
        prev = w @ M[:n]
        M[n, 1:] = prev[:-1]
        M[n, J] += prev[J]
    return last_weight @ M


def _last_contact_weights(kernel: Kernel, log_Zc: np.ndarray, log_Z: float, N: int) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.exp(log_Zc[: N + 1] + np.log(kernel.survival[N::-1]) - log_Z)


def contact_count_law(kernel: Kernel, env: Environment, beta: float, h: float, N: int | None = None) -> ContactLaw:
    """Exact law of |tau cap [1, N]| by an O(N^3) count-resolved recursion."""
    N = env.N if N is None else int(N)
    if N > COUNT_LAW_MAX:
        raise ValueError(f"exact count law limited to N <= {COUNT_LAW_MAX}; sample paths instead")
    x, y = log_partition_batch(kernel, env.omega[None, :], beta, h, N)
    a = _site_rewards(env.omega, beta, h, N)
    q = _count_dp(kernel, a, x[0], N, N, _last_contact_weights(kernel, x[0], y[0, N], N))
    return ContactLaw(N, q)


def count_exceed_probability(kernel: Kernel, env: Environment, beta: float, h: float, threshold: float,
                             N: int | None = None) -> float:
    """P_N(|tau cap [1, N]| > threshold), exactly, via the count recursion
    capped at floor(threshold) + 1.  Cost O(N^2 threshold), so usable for
    N well above the full-law limit when the threshold is small."""
    N = env.N if N is None else int(N)
    J = int(math.floor(threshold)) + 1
    if J > N:
        return 0.0
    x, y = log_partition_batch(kernel, env.omega[None, :], beta, h, N)
    a = _site_rewards(env.omega, beta, h, N)
    q = _count_dp(kernel, a, x[0], J, N, _last_contact_weights(kernel, x[0], y[0, N], N))
    return float(min(max(q[J], 0.0), 1.0))


def brute_force_count_law(kernel: Kernel, env: Environment, beta: float, h: float, N: int) -> np.ndarray:
    if N > 20:
        raise ValueError("brute force limited to N <= 20")
    a = _site_rewards(env.omega, beta, h, N)
    logK, logT = kernel.log_K, np.log(kernel.survival[: N + 1])
    by_count = [[] for _ in range(N + 1)]
    for bits in itertools.product((False, True), repeat=N):
        w, last, cnt = 0.0, 0, 0
        for site in range(1, N + 1):
            if bits[site - 1]:
                w += logK[site - last] + a[site]
                last = site
                cnt += 1
        by_count[cnt].append(w + logT[N - last])
    logs = np.array([logsumexp(t) for t in by_count])
    return np.exp(logs - logsumexp(logs))


def prefix_count_law(kernel: Kernel, env: Environment, beta: float, h: float, n: int, N: int,
                     cap: int | None = None) -> np.ndarray:
    """Law of |tau cap [1, n]| under P_N (n <= N), optionally capped."""
    if n > N:
        raise ValueError("prefix length exceeds N")
    J = n if cap is None else min(int(cap), n)
    x, _ = log_partition_batch(kernel, env.omega[None, :], beta, h, N, free=False)
    a = _site_rewards(env.omega, beta, h, N)
    B = _backward(kernel, a, N)
    logK, logT = kernel.log_K, np.log(kernel.survival)
    j = np.arange(n + 1, N + 1)
    cont = np.array([logsumexp(np.concatenate([logK[j - k] + a[j] + B[j], [logT[N - k]]])) for k in range(n + 1)])
    last = np.exp(x[0, : n + 1] + cont - B[0])
    return _count_dp(kernel, a, x[0], J, n, last)


@dataclass
class MarginalLaw:
    m: int
    N: int
    configs: list  # tuples of contacts in [1, m]
    probs: np.ndarray

    def as_dict(self) -> dict:
        return dict(zip(self.configs, self.probs))


def finite_marginal_law(kernel: Kernel, env: Environment, beta: float, m: int, N: int | None = None,
                        disorder: DisorderSpec | str | None = None, h: float | None = None) -> MarginalLaw:
    """Exact law of tau cap [0, m] under P_N at h = -lambda(beta).

    Each configuration's prefix weight (product of K(gaps) e^{a}) is
    composed with the backward partition from its last contact.
    """
    N = env.N if N is None else int(N)
    if m > MARGINAL_MAX:
        raise ValueError(f"m limited to {MARGINAL_MAX}")
    if N < m:
        raise ValueError("N must be >= m")
    if h is None:
        h = -log_mgf(disorder if disorder is not None else env.spec, beta)
    a = _site_rewards(env.omega, beta, h, N)
    B = _backward(kernel, a, N)
    logK, logT = kernel.log_K, np.log(kernel.survival)
    j = np.arange(m + 1, N + 1)
    cont = [logsumexp(np.concatenate([logK[j - k] + a[j] + B[j], [logT[N - k]]])) for k in range(m + 1)]
    configs, logs = [], []
    for bits in itertools.product((False, True), repeat=m):
        w, last = 0.0, 0
        for site in range(1, m + 1):
            if bits[site - 1]:
                w += logK[site - last] + a[site]
                last = site
        configs.append(tuple(s for s in range(1, m + 1) if bits[s - 1]))
        logs.append(w + cont[last] - B[0])
    return MarginalLaw(m, N, configs, np.exp(np.array(logs)))


def total_variation(p: MarginalLaw, q: MarginalLaw) -> float:
    if p.configs != q.configs:
        raise ValueError("laws on different supports")
    return 0.5 * float(np.abs(p.probs - q.probs).sum())


@dataclass
class ContactFractionReport:
    N_grid: list
    gamma: float
    beta: float
    mean: list
    stderr: list
    frac_above: list
    threshold_c: float
    n_samples: int
    values: list = field(default_factory=list, repr=False)

    @property
    def increasing(self) -> bool:
        return all(b > a for a, b in zip(self.mean, self.mean[1:]))

    @property
    def decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.mean, self.mean[1:]))


def contact_fraction_experiment(kernel: Kernel, disorder: DisorderSpec, beta: float, gamma: float, N_grid,
                                n_samples: int, threshold_c: float = 0.5,
                                sample_indices=None) -> ContactFractionReport:
    """E[P_N(|tau cap [1,N]| > N^gamma)] over environments at h = -lambda(beta).

    The inner probability is exact for every N (capped count recursion);
    ``frac_above`` is the fraction of environments where it exceeds ``c``.
    """
    h = -log_mgf(disorder, beta)
    N_grid = [int(n) for n in N_grid]
    idx = list(range(n_samples)) if sample_indices is None else list(sample_indices)
    Nm = max(N_grid)
    vals = np.empty((len(N_grid), len(idx)))
    from pinlab.disorder_env import sample_environment
    for s, i in enumerate(idx):
        env = sample_environment(disorder, Nm, i)
        for g, N in enumerate(N_grid):
            vals[g, s] = count_exceed_probability(kernel, env, beta, h, N ** gamma, N)
    rep = ContactFractionReport(N_grid, gamma, beta, [], [], [], threshold_c, len(idx), vals.tolist())
    for g in range(len(N_grid)):
        m, se = _mean_se(vals[g])
        rep.mean.append(m)
        rep.stderr.append(se)
        rep.frac_above.append(float(np.mean(vals[g] > threshold_c)))
    return rep

"""Shared numerical kernels: shifted log-sum-exp recursions and online convolution.

Every partition-type recursion in the package has the shape

    x[n] = post[n] + log( extra[n] + sum_{k<n} K[n-k] * exp(x[k] + pre[k]) )

(constrained partition functions, backward weights, the pinned second-moment
recursion).  `shifted_lse_recursion` evaluates it for a batch of rows at once.
Values are kept in the log domain; the inner sum runs over
``exp(x[k] + pre[k] - R)`` where ``R`` is a per-row running shift that only
moves up, so each step is a single matrix-vector product.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import logsumexp

# Rescale a row once its shifted exponent exceeds this (e^600 * 1e5 terms < DBL_MAX).
_RESCALE_AT = 600.0
# Below this the shifted sum is considered underflowed and recomputed exactly.
_TINY = 1e-290


def shifted_lse_recursion(
    K: np.ndarray,
    N: int,
    x0: np.ndarray | float = 0.0,
    post: np.ndarray | None = None,
    pre: np.ndarray | None = None,
    extra: np.ndarray | None = None,
    free_tail: np.ndarray | None = None,
):
    """Run the batched recursion for n = 1..N.

    Args:
        K: kernel weights, ``K[j]`` for j = 0..>=N (``K[0]`` is ignored).
        N: last index.
        x0: initial value(s) ``x[0]``, scalar or shape (S,).
        post: (S, N+1) or (N+1,) additive term applied outside the log.
        pre: (S, N+1) or (N+1,) additive term applied to ``x[k]`` inside the sum.
        extra: (N+1,) nonnegative additive term inside the log.
        free_tail: optional (N+1,) weights ``T[j]``; when given, also returns
            ``y[n] = log sum_{k<=n} exp(x[k] + pre[k]) * T[n-k]``.

    Returns:
        ``x`` of shape (S, N+1), and ``y`` of the same shape if ``free_tail``
        was given.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    rows = [x0.shape[0]] + [np.atleast_2d(v).shape[0] for v in (post, pre) if v is not None]
    S = max(rows)
    if post is not None:
        post = np.broadcast_to(np.atleast_2d(np.asarray(post, dtype=float)), (S, N + 1))
    if pre is not None:
        pre = np.broadcast_to(np.atleast_2d(np.asarray(pre, dtype=float)), (S, N + 1))
    x0 = np.broadcast_to(x0, (S,))

    Krev = np.ascontiguousarray(np.asarray(K, dtype=float)[N:0:-1])  # Krev[N-n+k] = K[n-k]
    Trev = None
    if free_tail is not None:
        Trev = np.ascontiguousarray(np.asarray(free_tail, dtype=float)[N::-1])  # Trev[N-n+k] = T[n-k]

    x = np.empty((S, N + 1))
    x[:, 0] = x0
    y = np.empty((S, N + 1)) if Trev is not None else None
    z0 = x0 + (pre[:, 0] if pre is not None else 0.0)
    R = np.maximum(z0, 0.0)
    E = np.zeros((S, N + 1))
    E[:, 0] = np.exp(z0 - R)
    if y is not None:
        y[:, 0] = z0 + np.log(free_tail[0])

    for n in range(1, N + 1):
        s = E[:, :n] @ Krev[N - n:]
        if extra is not None and extra[n] != 0.0:
            s = s + extra[n] * np.exp(-R)
        with np.errstate(divide="ignore"):
            xn = R + np.log(s)
        bad = ~(s > _TINY)
        if bad.any():
            xn[bad] = _exact_row(K, x, pre, extra, n, np.flatnonzero(bad))
        if post is not None:
            xn = xn + post[:, n]
        x[:, n] = xn

        zn = xn + (pre[:, n] if pre is not None else 0.0)
        grow = zn - R > _RESCALE_AT
        if grow.any():
            rows = np.flatnonzero(grow)
            delta = zn[rows] - R[rows]
            E[rows, :n] *= np.exp(-delta)[:, None]
            R[rows] += delta
        E[:, n] = np.exp(zn - R)

        if y is not None:
            t = E[:, :n + 1] @ Trev[N - n:]
            with np.errstate(divide="ignore"):
                y[:, n] = R + np.log(t)
            lost = ~(t > _TINY)
            if lost.any():
                z = x[:, :n + 1] + (pre[:, :n + 1] if pre is not None else 0.0)
                with np.errstate(divide="ignore"):
                    lt = np.log(free_tail[n::-1])
                y[lost, n] = logsumexp(z[lost] + lt, axis=1)

    if y is not None:
        return x, y
    return x


def _exact_row(K, x, pre, extra, n, rows):
    with np.errstate(divide="ignore"):
        logK = np.log(np.asarray(K[n:0:-1], dtype=float))
    z = x[rows, :n] + (pre[rows, :n] if pre is not None else 0.0)
    terms = z + logK
    if extra is not None and extra[n] > 0.0:
        terms = np.concatenate([terms, np.full((len(rows), 1), np.log(extra[n]))], axis=1)
    return logsumexp(terms, axis=1)


_DIRECT_BLOCK = 256


def online_convolution(b: np.ndarray, c: np.ndarray, sign: float = 1.0, method: str = "direct") -> np.ndarray:
    """Solve ``x[n] = b[n] + sign * sum_{k=1}^{n-1} x[k] * c[n-k]`` for n >= 1.

    ``x[0]`` is returned as 0 and callers fix it.  With ``method="direct"``
    each step is one dot product (O(n^2) total).  ``method="fft"`` uses
    divide-and-conquer with FFT products for the off-diagonal blocks
    (O(n log^2 n)); round-off is then of order 1e-16 times the block norms
    rather than per-term exact.
    """
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n_max = len(b) - 1
    x = np.zeros(n_max + 1)
    if method == "direct":
        crev = np.ascontiguousarray(c[n_max:0:-1])  # crev[n_max-n+k] = c[n-k]
        for n in range(1, n_max + 1):
            acc = x[1:n] @ crev[n_max - n + 1:n_max] if n > 1 else 0.0
            x[n] = b[n] + sign * acc
        return x
    if method != "fft":
        raise ValueError(f"unknown method {method!r}")
    acc = np.zeros(n_max + 1)
    _cdq(b, c, sign, x, acc, 1, n_max + 1)
    return x


def _cdq(b, c, sign, x, acc, lo, hi):
    if hi - lo <= _DIRECT_BLOCK:
        for n in range(lo, hi):
            s = acc[n]
            if n > lo:
                s += x[lo:n] @ c[n - lo:0:-1]
            x[n] = b[n] + sign * s
        return
    mid = (lo + hi) // 2
    _cdq(b, c, sign, x, acc, lo, mid)
    # contributions of x[lo:mid] to positions mid..hi-1
    prod = fftconvolve(x[lo:mid], c[: hi - lo])
    # prod[i] = sum_k x[lo+k] c[i-k]; position n = lo + i
    acc[mid:hi] += prod[mid - lo:hi - lo]
    _cdq(b, c, sign, x, acc, mid, hi)

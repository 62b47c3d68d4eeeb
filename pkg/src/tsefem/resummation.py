"""Borel resummation of time series through factorial series.

For coefficients u_0, u_1, ... the Borel-Laplace sum is expanded as

    u_0 + sum_k  c_k t^{k+1} / ((1+t)(1+2t)...(1+kt)),   c_k = sum_n |s(k,n)| u_{n+1},

and the finite sum over k < N is evaluated with a triangular recursion that
never forms Stirling numbers explicitly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

STIRLING_MAX = 20


@lru_cache(maxsize=None)
def _stirling(n: int, p: int) -> int:
    if n == 0:
        return 1 if p == 0 else 0
    if p == 0 or p > n:
        return 0
    return (n - 1) * _stirling(n - 1, p) + _stirling(n - 1, p - 1)


def stirling_unsigned_first_kind(n: int, p: int) -> int:
    """|s(n, p)|: number of permutations of n elements with p cycles."""
    if not (0 <= n <= STIRLING_MAX) or p < 0:
        raise ValueError(f"need 0 <= p and 0 <= n <= {STIRLING_MAX}, got n={n}, p={p}")
    return _stirling(n, p)


def as_coefficients(coeffs) -> np.ndarray:
    """Stack coefficients as a (rank+1, dim) float array; scalars become dim 1."""
    arr = np.asarray(coeffs, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError("coefficients must be a sequence of equal-length vectors")
    return arr


@dataclass
class ResummationResult:
    value: np.ndarray
    partial_terms: np.ndarray    # (N, dim): w_1..w_N
    converged: bool


@lru_cache(maxsize=256)
def factorial_weights(t: float, N: int) -> np.ndarray:
    """Matrix W (N, N) with w_{k+1} = sum_P W[k, P-1] u_P.

    Obtained by running the triangular recursion on unit coefficients, so a
    whole DOF vector is summed with a single table per (t, N).
    """
    if t <= 0:
        raise ValueError("factorial series are evaluated for t > 0 only")
    # row P-1 of `stage` holds w^{(j)}_P as a linear form in (u_1..u_N)
    stage = np.diag(t ** np.arange(1, N + 1, dtype=float))
    out = np.zeros((N, N))
    inv_t = 1.0 / t
    for j in range(1, N + 1):
        out[j - 1] = stage[j - 1]
        nxt = np.zeros_like(stage)
        for P in range(j + 1, N + 1):
            lower = j * stage[P - 2] if P - 1 > j else 0.0
            nxt[P - 1] = (inv_t * stage[P - 1] + lower) / (inv_t + j)
        stage = nxt
    out.flags.writeable = False
    return out


def factorial_sum(coeffs, t: float, N: int | None = None, tail_tol: float = 1e-8) -> ResummationResult:
    """Finite factorial-series Borel sum ``u_0 + w_1 + ... + w_N`` at time t."""
    U = as_coefficients(coeffs)
    if N is None:
        N = len(U) - 1
    if N < 0 or N > len(U) - 1:
        raise ValueError(f"N={N} exceeds the available rank {len(U) - 1}")
    if t <= 0:
        raise ValueError("factorial series are evaluated for t > 0 only")
    if N == 0:
        return ResummationResult(U[0].copy(), np.zeros((0, U.shape[1])), True)
    W = factorial_weights(float(t), int(N))
    terms = W @ U[1:N + 1]
    value = U[0] + terms.sum(axis=0)
    tail = np.abs(terms[-1]).max() / (1.0 + np.abs(value).max())
    return ResummationResult(value, terms, bool(tail <= tail_tol))


def stirling_transform(coeffs, N: int) -> np.ndarray:
    """v_k = (1/k!) sum_{p=1}^{k+1} |s(k, p-1)| u_p for k = 0..N (exact Stirling numbers)."""
    U = as_coefficients(coeffs)
    if not 0 <= N <= STIRLING_MAX or N + 1 > len(U) - 1:
        raise ValueError(f"N={N} out of range")
    v = np.zeros((N + 1, U.shape[1]))
    for k in range(N + 1):
        acc = sum(stirling_unsigned_first_kind(k, p - 1) * U[p] for p in range(1, k + 2))
        v[k] = acc / math.factorial(k)
    return v


def factorial_sum_direct(coeffs, t: float, N: int) -> np.ndarray:
    """Same finite sum as :func:`factorial_sum`, through explicit Stirling numbers."""
    U = as_coefficients(coeffs)
    total = U[0].copy()
    if N == 0:
        return total
    v = stirling_transform(U, N - 1)
    denom = 1.0
    for k in range(N):
        if k:
            denom *= 1.0 + k * t
        total = total + math.factorial(k) * v[k] * t ** (k + 1) / denom
    return total


def partial_sum(coeffs, t: float, N: int | None = None) -> np.ndarray:
    """Truncated power series sum_{k<=N} u_k t^k (Horner)."""
    U = as_coefficients(coeffs)
    if N is None:
        N = len(U) - 1
    acc = U[N].copy()
    for k in range(N - 1, -1, -1):
        acc = acc * t + U[k]
    return acc

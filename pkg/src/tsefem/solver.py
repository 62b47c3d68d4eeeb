"""Direct saddle-point solves, 1-norm condition estimation and the alpha_0 search."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SaddleSystem


class SolverError(RuntimeError):
    pass


class SingularSystemError(SolverError):
    def __init__(self, message, pivot=None):
        self.pivot = pivot
        super().__init__(message)


class ResidualError(SolverError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"relative residual {residual:.3e} above tolerance")


class Factorization:
    """Sparse LU of a square matrix (SuperLU)."""

    def __init__(self, matrix):
        A = sp.csc_matrix(matrix)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.matrix = A
        self.shape = A.shape
        try:
            self._lu = spla.splu(A)
        except RuntimeError as exc:
            pivot = _zero_pivot(A)
            raise SingularSystemError(f"singular factorization ({exc}); zero pivot near column {pivot}",
                                      pivot) from None
        # L U = Pr A Pc: pivot perm_c[i] belongs to column i of A
        diag = np.abs(self._lu.U.diagonal())
        scale = np.empty_like(diag)
        scale[self._lu.perm_c] = np.asarray(abs(A).max(axis=0).todense()).ravel()
        small = np.flatnonzero(~(diag > 1e-13 * scale))
        self.singular = bool(small.size)
        self.zero_pivot = int(np.argsort(self._lu.perm_c)[small[0]]) if small.size else None
        self.fill = self._lu.L.nnz + self._lu.U.nnz

    @property
    def dimension(self) -> int:
        return self.shape[0]

    def solve(self, b, trans: str = "N"):
        return self._lu.solve(np.asarray(b, float), trans=trans)


def _zero_pivot(A) -> int | None:
    d = np.abs(A.diagonal())
    empty = np.flatnonzero(np.diff(A.indptr) == 0)
    if empty.size:
        return int(empty[0])
    return int(np.argmin(d)) if d.size else None


@dataclass
class SaddleSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float
    residual: float


def solve_saddle(system: SaddleSystem, rhs, factorization: Factorization | None = None,
                 tol: float = 1e-9) -> SaddleSolution:
    """Solve the constrained system; raise if the residual exceeds ``tol``."""
    fact = factorization or Factorization(system.matrix)
    if fact.singular:
        raise SingularSystemError(f"zero pivot at column {fact.zero_pivot}", fact.zero_pivot)
    b = np.asarray(rhs, float)
    x = fact.solve(b)
    bn = np.linalg.norm(b)
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite solution")
    res = np.linalg.norm(system.matrix @ x - b) / bn if bn > 0 else np.linalg.norm(x)
    if res > tol:
        raise ResidualError(res)
    u, p, lam = system.split(x)
    if system.pressure_mode in ("mean", "pin"):
        p = p - (system.mean_row @ p) / system.mean_row.sum()
    return SaddleSolution(u.copy(), p.copy(), lam, float(res))


def onenorm(A) -> float:
    if sp.issparse(A):
        return float(abs(A).sum(axis=0).max())
    return float(np.abs(np.asarray(A)).sum(axis=0).max())


def inverse_onenorm(fact: Factorization, seed: int = 0) -> float:
    """Lower bound on ``||A^{-1}||_1`` (Higham-Tisseur block estimator, scipy).

    The estimator draws random sign columns from the global numpy generator;
    it is seeded here and the caller's state restored, so results repeat.
    """
    n = fact.dimension
    op = spla.LinearOperator((n, n), matvec=fact.solve, rmatvec=lambda v: fact.solve(v, "T"),
                             matmat=fact.solve, dtype=float)
    state = np.random.get_state()
    np.random.seed(seed)
    try:
        return float(spla.onenormest(op, t=min(2, n)))
    finally:
        np.random.set_state(state)


def estimate_condition_1norm(A) -> float:
    """Estimate of ``kappa_1(A)``; ``inf`` for a singular matrix.

    Accepts a matrix (dense or sparse) or a :class:`Factorization`.
    """
    if isinstance(A, Factorization):
        fact = A
    else:
        M = sp.csc_matrix(A)
        try:
            fact = Factorization(M)
        except SingularSystemError:
            return math.inf
    if fact.singular:
        return math.inf
    return onenorm(fact.matrix) * inverse_onenorm(fact)


@dataclass
class Alpha0Result:
    alpha: float
    log10_alpha: float
    kappa: float
    flat: bool
    evaluations: list


GOLDEN = (math.sqrt(5) - 1) / 2


def find_alpha0(mass, stiffness, bracket=(-12.0, 2.0), free_dofs=None,
                digits: int = 2) -> Alpha0Result:
    """Minimise ``alpha -> kappa_1(mass + alpha * stiffness)`` over log10(alpha).

    Golden-section search on the bracket, stopped once alpha is pinned to
    ``digits`` significant digits.
    """
    M = sp.csr_matrix(mass)
    K = sp.csr_matrix(stiffness)
    if free_dofs is not None:
        M = M[free_dofs][:, free_dofs]
        K = K[free_dofs][:, free_dofs]
    evals = []

    def f(s):
        k = estimate_condition_1norm(M + 10.0 ** s * K)
        if not np.isfinite(k):
            raise SolverError(f"non-finite condition estimate at log10(alpha)={s:.4g}")
        evals.append((s, k))
        return k

    lo, hi = bracket
    f_lo, f_hi = f(lo), f(hi)
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    tol = math.log10(1 + 0.5 * 10.0 ** (1 - digits))
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    values = np.array([k for _, k in evals])
    flat = bool(values.max() - values.min() <= 1e-12 * values.max())
    if flat:
        return Alpha0Result(10.0 ** lo, lo, f_lo, True, evals)
    s_best, k_best = (c, fc) if fc <= fd else (d, fd)
    # the bracket ends are candidates too (monotone objectives)
    for s, k in ((lo, f_lo), (hi, f_hi)):
        if k < k_best:
            s_best, k_best = s, k
    return Alpha0Result(10.0 ** s_best, s_best, k_best, False, evals)

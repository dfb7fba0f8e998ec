"""Sparse kernels, direct SPD solves, Gauss-Seidel relaxation and MINRES.

Matrices are :class:`scipy.sparse.csr_matrix` with sorted, duplicate-free
column indices (see :func:`as_csr`).  Gauss-Seidel sweeps run in compiled
numba loops over the CSR arrays.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class BreakdownError(RuntimeError):
    """MINRES detected an indefinite preconditioner."""


class NotSPDError(np.linalg.LinAlgError):
    """Cholesky-type factorization hit a non-positive pivot."""

    def __init__(self, index, value):
        super().__init__(f"non-positive pivot {value:.3e} at index {index}")
        self.index = index
        self.value = value


def as_csr(A) -> sp.csr_matrix:
    """Canonical CSR copy: sorted unique indices, explicit zeros removed."""
    A = sp.csr_matrix(A, dtype=float, copy=True)
    A.sum_duplicates()
    A.eliminate_zeros()
    A.sort_indices()
    return A


def is_symmetric(A, rtol=1e-12) -> bool:
    A = sp.csr_matrix(A)
    scale = abs(A).sum(axis=1).max()
    if scale == 0:
        return True
    return abs(A - A.T).sum(axis=1).max() <= rtol * scale


def spmv(A, x) -> np.ndarray:
    """``y = A x`` with a dimension check."""
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {x.shape}")
    return A @ x


# -- direct solves ---------------------------------------------------------

class SPDFactor:
    """Reusable direct factorization of a sparse SPD matrix.

    Uses SuperLU in symmetric mode without pivoting, so the factor is
    ``L D L^T`` in disguise and a non-positive entry of ``D`` certifies that
    the matrix is not positive definite.
    """

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        self._lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                             options={"SymmetricMode": True})
        d = self._lu.U.diagonal()
        bad = np.flatnonzero(d <= 0)
        if bad.size:
            i = int(bad[0])
            raise NotSPDError(int(self._lu.perm_c[i]), float(d[i]))

    def solve(self, b) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    __call__ = solve


def factor_spd(A) -> SPDFactor:
    return SPDFactor(A)


def solve(factor: SPDFactor, b) -> np.ndarray:
    return factor.solve(b)


class BlockDiagonalSolver:
    """Exact inverse of a block-diagonal SPD matrix given as dense blocks."""

    def __init__(self, blocks):
        blocks = np.asarray(blocks, dtype=float)
        self.nb = blocks.shape[1]
        self._chol = np.linalg.cholesky(blocks)
        self._inv = np.linalg.inv(blocks)
        self.shape = (blocks.shape[0] * self.nb,) * 2

    def solve(self, b) -> np.ndarray:
        r = np.asarray(b).reshape(-1, self.nb)
        return np.einsum("bij,bj->bi", self._inv, r).ravel()

    __call__ = solve


# -- Gauss-Seidel ------------------------------------------------------------

@numba.njit(cache=True)
def _gs_forward(indptr, indices, data, diag, x, b):
    n = len(b)
    for i in range(n):
        s = b[i]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j != i:
                s -= data[jj] * x[j]
        x[i] = s / diag[i]


@numba.njit(cache=True)
def _gs_backward(indptr, indices, data, diag, x, b):
    n = len(b)
    for i in range(n - 1, -1, -1):
        s = b[i]
        for jj in range(indptr[i], indptr[i + 1]):
            j = indices[jj]
            if j != i:
                s -= data[jj] * x[j]
        x[i] = s / diag[i]


class GaussSeidel:
    """Forward/backward/symmetric Gauss-Seidel on a fixed CSR matrix."""

    def __init__(self, A):
        A = as_csr(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("Gauss-Seidel needs a square matrix")
        diag = A.diagonal()
        zero = np.flatnonzero(diag == 0)
        if zero.size:
            raise ZeroDivisionError(f"zero diagonal entry at row {int(zero[0])}")
        self.A = A
        self.diag = diag
        self._args = (A.indptr, A.indices, A.data, diag)

    def forward(self, x, b):
        _gs_forward(*self._args, x, np.asarray(b, dtype=float))
        return x

    def backward(self, x, b):
        _gs_backward(*self._args, x, np.asarray(b, dtype=float))
        return x

    def symmetric(self, x, b, sweeps=1):
        for _ in range(sweeps):
            self.forward(x, b)
            self.backward(x, b)
        return x

    def apply(self, r, sweeps=1) -> np.ndarray:
        """Symmetric sweeps from a zero initial guess (an SPD operator)."""
        x = np.zeros(self.A.shape[0])
        return self.symmetric(x, r, sweeps)

    __call__ = apply


def sgs_sweep(A, b, x) -> np.ndarray:
    """One forward then one backward Gauss-Seidel pass; returns the new iterate."""
    x = np.array(x, dtype=float, copy=True)
    return GaussSeidel(A).symmetric(x, b)


# -- MINRES -------------------------------------------------------------------

@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``history`` holds relative preconditioned residual norms, starting with
    ``1.0``, so ``len(history) == iterations + 1``.
    """

    iterations: int
    history: list
    converged: bool
    true_residual: float = float("nan")
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "converged": self.converged,
                "true_residual": self.true_residual, "wall_time": self.wall_time,
                "history": list(map(float, self.history)),
                "diagnostics": dict(self.diagnostics)}


class _Deflation:
    def __init__(self, vectors, n):
        if vectors is None:
            self.Z = None
            return
        V = np.asarray(vectors, dtype=float).reshape(n, -1)
        self.Z, _ = np.linalg.qr(V)

    def __call__(self, x):
        if self.Z is None:
            return x
        return x - self.Z @ (self.Z.T @ x)


def _as_operator(op, n):
    if op is None:
        return lambda x: x
    if hasattr(op, "matvec"):
        return op.matvec
    if callable(op):
        return op
    return lambda x: op @ x


def minres(op, b, precond=None, tol=1e-8, maxiter=1000, deflation_vectors=None,
           callback=None):
    """Preconditioned MINRES for symmetric (possibly singular) systems.

    Parameters
    ----------
    op : matrix, LinearOperator or callable
        Symmetric operator.
    b : ndarray
    precond : matrix, LinearOperator or callable, optional
        Applies the inverse of an SPD preconditioner.
    tol : float
        Stop when the preconditioned residual norm has dropped by ``tol``
        relative to its initial value.
    deflation_vectors : array, optional
        Basis of the nullspace of ``op``.  The right-hand side, the
        preconditioned vectors and the result are projected onto their
        Euclidean orthogonal complement.

    Returns
    -------
    x : ndarray
    report : SolveReport

    Raises
    ------
    BreakdownError
        If the preconditioner produces a negative inner product.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    A = _as_operator(op, n)
    Minv = _as_operator(precond, n)
    defl = _Deflation(deflation_vectors, n)

    def prec(r):
        return defl(Minv(defl(r)))

    bb = defl(b)
    x = np.zeros(n)
    r1 = bb.copy()
    y = prec(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise BreakdownError("indefinite preconditioner")
    history = [1.0]
    if beta1 == 0:
        return x, SolveReport(0, history, True, 0.0, time.perf_counter() - t0)
    beta1 = np.sqrt(beta1)

    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    eps = np.finfo(float).eps
    converged = False
    itn = 0
    while itn < maxiter:
        itn += 1
        v = y / beta
        y = A(v)
        if itn >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = prec(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0:
            raise BreakdownError("indefinite preconditioner")
        beta = np.sqrt(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(np.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w
        rel = phibar / beta1
        history.append(rel)
        if callback is not None:
            callback(x)
        if rel <= tol:
            converged = True
            break
        if beta <= eps * beta1:
            # Krylov space exhausted: exact solution reached
            converged = True
            break

    x = defl(x)
    res = bb - A(x)
    nb = np.linalg.norm(bb)
    true_res = float(np.linalg.norm(res) / nb) if nb > 0 else 0.0
    return x, SolveReport(itn, history, converged, true_res, time.perf_counter() - t0)


# -- dense helpers and IO -------------------------------------------------------

def generalized_eigh(S, M, null=None):
    """Eigenvalues of ``S q = s M q`` on the ``M``-orthogonal complement of ``null``.

    ``S`` symmetric, ``M`` SPD (both dense).  Vectors in ``null`` are assumed
    to span (part of) the kernel of ``S``; restricting to their
    ``M``-orthogonal complement removes exactly their zero eigenvalues.
    """
    S = np.asarray(S, dtype=float)
    M = np.asarray(M, dtype=float)
    if null is not None:
        V = np.asarray(null, dtype=float).reshape(S.shape[0], -1)
        W = M @ V
        Qf, _ = np.linalg.qr(W, mode="complete")
        Z = Qf[:, V.shape[1]:]
        S = Z.T @ S @ Z
        M = Z.T @ M @ Z
    return sla.eigh(S, M, eigvals_only=True)


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), comment=comment)


def read_matrix_market(path) -> sp.csr_matrix:
    return as_csr(scipy.io.mmread(str(path)))

"""Classical (Ruge-Stueben) algebraic multigrid.

Setup: absolute-value strength of connection, Ruge-Stueben C/F splitting
(first pass, optionally followed by the second pass), then direct or classical
interpolation and Galerkin coarse operators ``P^T A P``.  Direct interpolation
treats negative and positive couplings separately; classical interpolation also
distributes strong F-F couplings.  Each V-cycle uses one
symmetric Gauss-Seidel sweep before and after the coarse correction, so a
fixed number of cycles from a zero guess is a symmetric positive definite
operator and can sit inside a MINRES preconditioner.
"""
from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .sparse_linalg import GaussSeidel, SPDFactor, as_csr, is_symmetric

log = logging.getLogger(__name__)


def strength_of_connection(A, theta: float) -> sp.csr_matrix:
    """Pattern of strong couplings, ``|a_ij| >= theta * max_{k != i} |a_ik|``.

    Row ``i`` of the result lists the points that strongly influence ``i``.
    """
    if not 0 <= theta <= 1:
        raise ValueError(f"strength threshold must lie in [0, 1], got {theta}")
    A = as_csr(A)
    n = A.shape[0]
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    off = rows != A.indices
    mag = np.where(off, np.abs(A.data), 0.0)
    rowmax = np.zeros(n)
    np.maximum.at(rowmax, rows, mag)
    keep = off & (mag >= theta * rowmax[rows]) & (mag > 0)
    S = sp.csr_matrix((np.ones(keep.sum()), (rows[keep], A.indices[keep])), shape=A.shape)
    S.sort_indices()
    return S


def rs_splitting(S: sp.csr_matrix, second_pass: bool = False) -> np.ndarray:
    """Ruge-Stueben C/F splitting; returns a boolean C-point mask.

    The first pass is the greedy independent-set heuristic.  The optional
    second pass adds C points until every pair of strongly coupled F points
    shares a strong C neighbour, which classical interpolation relies on.
    """
    S = sp.csr_matrix(S)
    T = S.T.tocsr()
    i64 = [a.astype(np.int64) for a in (S.indptr, S.indices, T.indptr, T.indices)]
    is_c = _rs_cf(*i64, S.shape[0])
    if second_pass:
        # symmetric pattern for the pairwise test
        U = (S + S.T).tocsr()
        U.sort_indices()
        is_c = _rs_second_pass(U.indptr.astype(np.int64), U.indices.astype(np.int64), is_c)
    return is_c


@numba.njit(cache=True)
def _rs_cf(sp_, sj, tp, tj, n):
    UNDECIDED, CPT, FPT = 0, 1, 2
    state = np.zeros(n, np.int64)
    lam = np.zeros(n, np.int64)
    for i in range(n):
        lam[i] = tp[i + 1] - tp[i]
    heap = [(-lam[0], 0)]
    heap.pop()
    for i in range(n):
        if lam[i] == 0 and sp_[i + 1] - sp_[i] == 0:
            state[i] = FPT  # isolated point, nothing to interpolate from
        else:
            heapq.heappush(heap, (-lam[i], i))
    while len(heap) > 0:
        negl, i = heapq.heappop(heap)
        if state[i] != UNDECIDED or -negl != lam[i]:
            continue
        state[i] = CPT
        # points strongly influenced by i become F
        for jj in range(tp[i], tp[i + 1]):
            j = tj[jj]
            if state[j] == UNDECIDED:
                state[j] = FPT
                for kk in range(sp_[j], sp_[j + 1]):
                    k = sj[kk]
                    if state[k] == UNDECIDED:
                        lam[k] += 1
                        heapq.heappush(heap, (-lam[k], k))
        for jj in range(sp_[i], sp_[i + 1]):
            j = sj[jj]
            if state[j] == UNDECIDED:
                lam[j] -= 1
                heapq.heappush(heap, (-lam[j], j))
    # F points strongly coupled to no C point cannot interpolate: promote them
    for i in range(n):
        if state[i] == FPT and sp_[i + 1] > sp_[i]:
            has_c = False
            for jj in range(sp_[i], sp_[i + 1]):
                if state[sj[jj]] == CPT:
                    has_c = True
                    break
            if not has_c:
                state[i] = CPT
    return state == CPT


@numba.njit(cache=True)
def _rs_second_pass(up, uj, is_c):
    n = len(is_c)
    is_c = is_c.copy()
    mark = -np.ones(n, np.int64)
    for i in range(n):
        if is_c[i]:
            continue
        for kk in range(up[i], up[i + 1]):
            if is_c[uj[kk]]:
                mark[uj[kk]] = i
        tentative = -1
        kk = up[i]
        while kk < up[i + 1]:
            j = uj[kk]
            kk += 1
            if j == i or is_c[j]:
                continue
            shared = False
            for ll in range(up[j], up[j + 1]):
                if mark[uj[ll]] == i:
                    shared = True
                    break
            if shared:
                continue
            if tentative >= 0:
                # second offender: make i itself a C point instead
                is_c[tentative] = False
                is_c[i] = True
                tentative = -1
                break
            tentative = j
            is_c[j] = True
            mark[j] = i
    return is_c


@numba.njit(cache=True)
def _direct_interp(ap, aj, ax, sp_, sj, is_c, cindex):
    n = len(is_c)
    # count nonzeros
    nnz = 0
    for i in range(n):
        if is_c[i]:
            nnz += 1
        else:
            for kk in range(sp_[i], sp_[i + 1]):
                if is_c[sj[kk]]:
                    nnz += 1
    pp = np.zeros(n + 1, np.int64)
    pj = np.zeros(nnz, np.int64)
    px = np.zeros(nnz)
    pos = 0
    strong = np.zeros(n, np.bool_)
    for i in range(n):
        if is_c[i]:
            pj[pos] = cindex[i]
            px[pos] = 1.0
            pos += 1
            pp[i + 1] = pos
            continue
        for kk in range(sp_[i], sp_[i + 1]):
            if is_c[sj[kk]]:
                strong[sj[kk]] = True
        diag = 0.0
        sum_neg = 0.0
        sum_pos = 0.0
        c_neg = 0.0
        c_pos = 0.0
        for kk in range(ap[i], ap[i + 1]):
            j = aj[kk]
            v = ax[kk]
            if j == i:
                diag += v
            elif v < 0:
                sum_neg += v
                if strong[j]:
                    c_neg += v
            else:
                sum_pos += v
                if strong[j]:
                    c_pos += v
        # couplings with no interpolatory counterpart are lumped into the diagonal
        if c_neg == 0.0:
            diag += sum_neg
        if c_pos == 0.0:
            diag += sum_pos
        alpha = sum_neg / c_neg if c_neg != 0.0 else 0.0
        beta = sum_pos / c_pos if c_pos != 0.0 else 0.0
        for kk in range(ap[i], ap[i + 1]):
            j = aj[kk]
            if j != i and strong[j]:
                v = ax[kk]
                pj[pos] = cindex[j]
                if v < 0:
                    px[pos] = -alpha * v / diag
                else:
                    px[pos] = -beta * v / diag
                pos += 1
        for kk in range(sp_[i], sp_[i + 1]):
            strong[sj[kk]] = False
        pp[i + 1] = pos
    return pp, pj[:pos], px[:pos]


@numba.njit(cache=True)
def _classical_interp(ap, aj, ax, sp_, sj, is_c, cindex):
    n = len(is_c)
    nnz = 0
    for i in range(n):
        if is_c[i]:
            nnz += 1
        else:
            for kk in range(sp_[i], sp_[i + 1]):
                if is_c[sj[kk]]:
                    nnz += 1
    pp = np.zeros(n + 1, np.int64)
    pj = np.zeros(nnz, np.int64)
    px = np.zeros(nnz)
    # marker[j]: -1 not strong, -2 strong F, >= 0 slot of strong C point in row
    marker = -np.ones(n, np.int64)
    diag_of = np.zeros(n)
    for i in range(n):
        for kk in range(ap[i], ap[i + 1]):
            if aj[kk] == i:
                diag_of[i] = ax[kk]
    pos = 0
    for i in range(n):
        if is_c[i]:
            pj[pos] = cindex[i]
            px[pos] = 1.0
            pos += 1
            pp[i + 1] = pos
            continue
        start = pos
        for kk in range(sp_[i], sp_[i + 1]):
            j = sj[kk]
            if j == i:
                continue
            if is_c[j]:
                marker[j] = pos
                pj[pos] = cindex[j]
                px[pos] = 0.0
                pos += 1
            else:
                marker[j] = -2
        diag = 0.0
        for kk in range(ap[i], ap[i + 1]):
            j = aj[kk]
            v = ax[kk]
            if j == i:
                diag += v
            elif marker[j] >= 0:
                px[marker[j]] += v
            elif marker[j] == -2:
                # distribute a_ij over the strong C points of i coupled to j,
                # using only couplings of sign opposite to a_jj
                sgn = 1.0 if diag_of[j] > 0 else -1.0
                den = 0.0
                for mm in range(ap[j], ap[j + 1]):
                    m = aj[mm]
                    if m != j and marker[m] >= 0 and ax[mm] * sgn < 0:
                        den += ax[mm]
                if den == 0.0:
                    diag += v
                else:
                    for mm in range(ap[j], ap[j + 1]):
                        m = aj[mm]
                        if m != j and marker[m] >= 0 and ax[mm] * sgn < 0:
                            px[marker[m]] += v * ax[mm] / den
            else:
                diag += v  # weak coupling lumped into the diagonal
        for q in range(start, pos):
            px[q] = -px[q] / diag
        for kk in range(sp_[i], sp_[i + 1]):
            marker[sj[kk]] = -1
        pp[i + 1] = pos
    return pp, pj[:pos], px[:pos]


def direct_interpolation(A, S, is_c) -> sp.csr_matrix:
    """Classical direct interpolation from the strong C-neighbours."""
    A = as_csr(A)
    S = sp.csr_matrix(S)
    cindex = np.cumsum(is_c) - 1
    pp, pj, px = _direct_interp(A.indptr, A.indices, A.data, S.indptr, S.indices,
                                np.asarray(is_c, dtype=np.bool_), cindex)
    P = sp.csr_matrix((px, pj, pp), shape=(A.shape[0], int(is_c.sum())))
    P.eliminate_zeros()
    return P


def classical_interpolation(A, S, is_c) -> sp.csr_matrix:
    """Classical Ruge-Stueben interpolation.

    Strong F-neighbour couplings are distributed over the common strong
    C-neighbours (sign-aware, as in the modified classical formula); weak
    couplings are lumped into the diagonal.
    """
    A = as_csr(A)
    S = sp.csr_matrix(S)
    cindex = np.cumsum(is_c) - 1
    pp, pj, px = _classical_interp(A.indptr, A.indices, A.data, S.indptr, S.indices,
                                   np.asarray(is_c, dtype=np.bool_), cindex)
    P = sp.csr_matrix((px, pj, pp), shape=(A.shape[0], int(is_c.sum())))
    P.eliminate_zeros()
    return P


INTERPOLATION = {"direct": direct_interpolation, "classical": classical_interpolation}


@dataclass
class AmgLevel:
    A: sp.csr_matrix
    P: sp.csr_matrix | None = None
    R: sp.csr_matrix | None = None
    smoother: GaussSeidel | None = None
    splitting: np.ndarray | None = None


@dataclass
class AmgHierarchy:
    levels: list
    coarse_solver: object
    theta: float
    presmooth: int = 1
    postsmooth: int = 1
    info: dict = field(default_factory=dict)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def sizes(self) -> list:
        return [lvl.A.shape[0] for lvl in self.levels]

    def operator_complexity(self) -> float:
        nnz = [lvl.A.nnz for lvl in self.levels]
        return sum(nnz) / nnz[0]

    def vcycle(self, b, x=None, level=0) -> np.ndarray:
        lvl = self.levels[level]
        if level == len(self.levels) - 1:
            return self.coarse_solver(b)
        x = np.zeros(len(b)) if x is None else x
        lvl.smoother.symmetric(x, b, self.presmooth)
        r = b - lvl.A @ x
        x += lvl.P @ self.vcycle(lvl.R @ r, None, level + 1)
        lvl.smoother.symmetric(x, b, self.postsmooth)
        return x

    def apply(self, r, n_cycles=1) -> np.ndarray:
        """``n_cycles`` V-cycles on ``A z = r`` from a zero initial guess."""
        r = np.asarray(r, dtype=float)
        if len(self.levels) == 1:
            return self.coarse_solver(r)
        x = self.vcycle(r)
        A = self.levels[0].A
        for _ in range(n_cycles - 1):
            x += self.vcycle(r - A @ x)
        return x

    def aspreconditioner(self, n_cycles=1):
        return lambda r: self.apply(r, n_cycles)


def amg_setup(A, theta: float = 0.25, max_coarse: int = 64, max_levels: int = 25,
              presmooth: int = 1, postsmooth: int = 1,
              interpolation: str = "direct", second_pass: bool = False) -> AmgHierarchy:
    """Build a Ruge-Stueben hierarchy for the SPD matrix ``A``.

    Coarsening stops when a level has at most ``max_coarse`` rows, when
    ``max_levels`` is reached, or when a splitting fails to reduce the size
    (that level is then solved directly).
    """
    A = as_csr(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError("AMG needs a square matrix")
    if not is_symmetric(A, 1e-10):
        raise ValueError("AMG setup expects a symmetric matrix")
    if np.any(A.diagonal() <= 0):
        raise ValueError("AMG setup expects a positive diagonal")

    try:
        interp = INTERPOLATION[interpolation]
    except KeyError:
        raise ValueError(f"unknown interpolation {interpolation!r}") from None

    levels = [AmgLevel(A)]
    while len(levels) < max_levels and levels[-1].A.shape[0] > max_coarse:
        lvl = levels[-1]
        S = strength_of_connection(lvl.A, theta)
        is_c = rs_splitting(S, second_pass)
        nc = int(is_c.sum())
        if nc == 0 or nc >= lvl.A.shape[0]:
            log.debug("coarsening stagnated at size %d", lvl.A.shape[0])
            break
        P = interp(lvl.A, S, is_c)
        R = P.T.tocsr()
        Ac = as_csr(R @ lvl.A @ P)
        Ac = as_csr(0.5 * (Ac + Ac.T))
        lvl.P, lvl.R, lvl.splitting = P, R, is_c
        lvl.smoother = GaussSeidel(lvl.A)
        levels.append(AmgLevel(Ac))

    coarse = levels[-1].A
    if coarse.shape[0] <= 4000:
        dense = coarse.toarray()
        try:
            cho = sla.cho_factor(dense)

            def coarse_solver(b, _c=cho):
                return sla.cho_solve(_c, b)
        except np.linalg.LinAlgError:
            pinv = np.linalg.pinv(dense)

            def coarse_solver(b):
                return pinv @ b
    else:
        coarse_solver = SPDFactor(coarse).solve
    h = AmgHierarchy(levels, coarse_solver, theta, presmooth, postsmooth)
    h.info = {"sizes": h.sizes, "operator_complexity": h.operator_complexity()}
    return h


def amg_apply(hierarchy: AmgHierarchy, r, n_cycles: int = 1) -> np.ndarray:
    return hierarchy.apply(r, n_cycles)

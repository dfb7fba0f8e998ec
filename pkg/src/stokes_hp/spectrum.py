"""Dense spectral oracle for the Schur complement and the preconditioned system.

Everything here materializes dense matrices and is meant for small meshes.
The size cap defaults to 20000 total unknowns and can be overridden with the
``STOKES_HP_DENSE_LIMIT`` environment variable.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import BlockSystem
from .sparse_linalg import factor_spd, generalized_eigh

DEFAULT_DENSE_LIMIT = 20000


class DenseLimitError(ValueError):
    """The system is too large for the dense oracle."""


def dense_limit() -> int:
    raw = os.environ.get("STOKES_HP_DENSE_LIMIT")
    if raw is None:
        return DEFAULT_DENSE_LIMIT
    try:
        val = int(raw)
    except ValueError:
        raise ValueError(f"STOKES_HP_DENSE_LIMIT must be an integer, got {raw!r}") from None
    if val <= 0:
        raise ValueError("STOKES_HP_DENSE_LIMIT must be positive")
    return val


def check_dense_limit(n: int, limit: int | None = None):
    limit = dense_limit() if limit is None else limit
    if n > limit:
        raise DenseLimitError(f"{n} unknowns exceed the dense limit {limit} "
                              f"(set STOKES_HP_DENSE_LIMIT to raise it)")


@dataclass
class SpectrumReport:
    """Extreme eigenvalues from the dense oracle.

    ``s_min``/``s_max`` bound the generalized eigenvalues of ``(S, Mw)`` with
    ``S = Bc A^{-1} Bc^T`` and ``Mw = bdiag(w_q Q, w_m M)``, on the complement
    of the pressure/multiplier constant.  The ``lambda_*`` fields describe the
    two clusters of eigenvalues of ``P^{-1} A_sys`` (exact inner blocks).
    ``constants`` holds the coercivity, boundedness and inf-sup estimates
    measured against the broken ``H^1`` Gram matrix; they are reported only.
    """

    k: int
    h: float
    n_cells: int
    omega_q: float
    omega_m: float
    s_min: float
    s_max: float
    lambda_min_pos: float = float("nan")
    lambda_max_pos: float = float("nan")
    lambda_min_neg: float = float("nan")
    lambda_max_neg: float = float("nan")
    n_pos: int = 0
    n_neg: int = 0
    constants: dict = field(default_factory=dict)

    @property
    def schur_interval(self):
        return (self.s_min, self.s_max)

    @property
    def positive_interval(self):
        return (self.lambda_min_pos, self.lambda_max_pos)

    @property
    def negative_interval(self):
        return (self.lambda_min_neg, self.lambda_max_neg)

    def to_dict(self) -> dict:
        return asdict(self)


def schur_eigenvalues(A, calB, calM, null=None) -> np.ndarray:
    """Generalized eigenvalues of ``(calB A^{-1} calB^T, calM)``.

    ``null`` (optional) spans the kernel of ``calB^T``; its ``calM``-orthogonal
    complement is the space the eigenproblem is restricted to.
    """
    Bt = calB.T.toarray() if sp.issparse(calB) else np.asarray(calB, dtype=float).T
    if sp.issparse(A):
        X = factor_spd(A).solve(Bt)
    else:
        X = sla.cho_solve(sla.cho_factor(np.asarray(A, dtype=float)), Bt)
    S = Bt.T @ X
    S = 0.5 * (S + S.T)
    Md = calM.toarray() if sp.issparse(calM) else np.asarray(calM, dtype=float)
    return generalized_eigh(S, Md, null)


def preconditioned_eigenvalues(K, P, null=None) -> np.ndarray:
    """Eigenvalues of ``P^{-1} K`` for symmetric ``K`` and SPD ``P`` (dense)."""
    K = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
    P = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
    return generalized_eigh(0.5 * (K + K.T), P, null)


def _gram_eigs(num, gram):
    return sla.eigh(num, gram, eigvals_only=True)


def discrete_constants(system: BlockSystem) -> dict:
    """Coercivity, continuity and inf-sup estimates in the broken H^1 norm.

    ``alpha``/``c_a``: extreme eigenvalues of ``(A, G)``; ``c_b``: largest
    generalized singular value of ``[B; C]`` against ``G`` and ``bdiag(Q, M)``;
    ``beta``/``beta_lambda``: smallest generalized singular values of ``B``
    and ``C`` separately.
    """
    G = sp.csc_matrix(system.assembler.gram_1h())
    A = system.A.toarray()
    Gd = G.toarray()
    ea = _gram_eigs(A, Gd)
    fac = factor_spd(G)

    def sing2(Bm, Mm):
        Bt = Bm.T.toarray()
        T = Bt.T @ fac.solve(Bt)
        return sla.eigh(0.5 * (T + T.T), Mm.toarray(), eigvals_only=True)

    calM = sp.block_diag([system.Q, system.M], format="csr")
    eb = sing2(system.calB, calM)
    eq = sing2(system.B, system.Q)
    el = sing2(system.C, system.M)
    return {"alpha": float(ea[0]), "c_a": float(ea[-1]),
            "c_b": float(np.sqrt(max(eb[-1], 0.0))),
            "beta": float(np.sqrt(max(eq[0], 0.0))),
            "beta_lambda": float(np.sqrt(max(el[0], 0.0)))}


def _split_clusters(rho, tol=1e-10):
    scale = np.max(np.abs(rho))
    pos = rho[rho > tol * scale]
    neg = rho[rho < -tol * scale]
    return pos, neg


def compute_schur_spectrum(system: BlockSystem, omega=(1.0, 1.0), with_full: bool = True,
                           with_constants: bool = False, limit: int | None = None) -> SpectrumReport:
    """Dense spectral analysis of the assembled hybridized system.

    Raises
    ------
    DenseLimitError
        If the number of unknowns exceeds the dense limit.
    """
    L = system.layout
    check_dense_limit(L.n_total, limit)
    wq, wm = map(float, omega)
    calM = sp.block_diag([wq * system.Q, wm * system.M], format="csr")
    null_pl = np.concatenate([np.ones(L.n_p), np.ones(L.n_l)])
    sig = schur_eigenvalues(system.A, system.calB, calM, null_pl)
    rep = SpectrumReport(k=L.k, h=float(system.mesh.h_max), n_cells=system.mesh.n_cells,
                         omega_q=wq, omega_m=wm, s_min=float(sig[0]), s_max=float(sig[-1]))
    if with_full:
        P = sp.block_diag([system.A, wq * system.Q, wm * system.M], format="csr")
        rho = preconditioned_eigenvalues(system.matrix, P, system.nullspace_vector())
        pos, neg = _split_clusters(rho)
        rep.n_pos, rep.n_neg = int(pos.size), int(neg.size)
        if pos.size:
            rep.lambda_min_pos, rep.lambda_max_pos = float(pos.min()), float(pos.max())
        if neg.size:
            rep.lambda_min_neg, rep.lambda_max_neg = float(neg.min()), float(neg.max())
    if with_constants:
        rep.constants = discrete_constants(system)
    return rep


def relative_drift(a: float, b: float) -> float:
    """``|a - b| / max(|a|, |b|)``."""
    den = max(abs(a), abs(b))
    return abs(a - b) / den if den > 0 else 0.0

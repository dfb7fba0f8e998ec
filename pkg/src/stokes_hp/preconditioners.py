"""Block preconditioners for the three-field hybridized Stokes system.

``BlockPreconditioner`` applies the inverse of either

* the block diagonal ``P = bdiag(A~, w_q Q, w_m M)``, or
* the block symmetric Gauss-Seidel ``Ps = (A_L + P) P^{-1} (A_L^T + P)``,
  with ``A_L`` the strictly lower block triangle of the system matrix.

Inner inverses are either exact (sparse direct for ``A``, dense block
Cholesky for the masses) or approximate (fixed AMG V-cycles, fixed symmetric
Gauss-Seidel sweeps), so each variant is a fixed SPD linear operator.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .amg import amg_setup
from .assembly import BlockSystem
from .sparse_linalg import BlockDiagonalSolver, GaussSeidel, factor_spd

# strength thresholds used for the velocity block, keyed by (dim, k)
DEFAULT_THETA = {(2, 2): 0.5, (2, 3): 0.25, (2, 4): 0.25, (2, 5): 0.25}
DEFAULT_AMG_CYCLES = {2: 4, 3: 10, 4: 10, 5: 10}


def default_theta(dim: int, k: int) -> float:
    if dim == 3:
        return 0.75
    return DEFAULT_THETA.get((dim, k), 0.25)


def default_amg_cycles(dim: int, k: int) -> int:
    if dim == 3:
        return 14
    return DEFAULT_AMG_CYCLES.get(k, 10)


def default_omega_q(dim: int) -> float:
    return 24.0 if dim == 2 else 32.0


@dataclass(frozen=True)
class PrecondConfig:
    """Preconditioner settings.

    The mass weights are rescaled on construction so that the smaller one
    equals 1.  ``amg_theta``/``amg_cycles`` of ``None`` pick the per-order
    defaults at setup time.
    """

    omega_q: float = 24.0
    omega_m: float = 1.0
    inner_A: str = "exact"        # 'exact' | 'amg'
    inner_mass: str = "exact"     # 'exact' | 'sgs'
    variant: str = "diag"         # 'diag' | 'sgs'
    amg_cycles: int | None = None
    amg_theta: float | None = None
    amg_interpolation: str = "classical"
    amg_second_pass: bool = True
    mass_sweeps: int = 1

    def __post_init__(self):
        if not (self.omega_q > 0 and self.omega_m > 0):
            raise ValueError("mass weights must be positive")
        lo = min(self.omega_q, self.omega_m)
        object.__setattr__(self, "omega_q", float(self.omega_q) / lo)
        object.__setattr__(self, "omega_m", float(self.omega_m) / lo)
        if self.inner_A not in ("exact", "amg"):
            raise ValueError(f"inner_A must be 'exact' or 'amg', got {self.inner_A!r}")
        if self.inner_mass not in ("exact", "sgs"):
            raise ValueError(f"inner_mass must be 'exact' or 'sgs', got {self.inner_mass!r}")
        if self.variant not in ("diag", "sgs"):
            raise ValueError(f"variant must be 'diag' or 'sgs', got {self.variant!r}")

    @classmethod
    def from_ratio(cls, ratio: float, **kw) -> "PrecondConfig":
        """``ratio = w_q / w_m``; below 1 this means ``w_q = 1, w_m = 1/ratio``."""
        if ratio <= 0:
            raise ValueError("ratio must be positive")
        if ratio >= 1:
            return cls(omega_q=ratio, omega_m=1.0, **kw)
        return cls(omega_q=1.0, omega_m=1.0 / ratio, **kw)

    @classmethod
    def inexact(cls, **kw) -> "PrecondConfig":
        kw.setdefault("inner_A", "amg")
        kw.setdefault("inner_mass", "sgs")
        return cls(**kw)

    def to_dict(self) -> dict:
        return asdict(self)


class ComponentSolver:
    """Applies one scalar solver to each velocity component in turn."""

    def __init__(self, scalar_solve, n_scalar: int, dim: int):
        self.scalar_solve = scalar_solve
        self.n = n_scalar
        self.dim = dim

    def __call__(self, r):
        r = np.asarray(r)
        return np.concatenate([self.scalar_solve(r[c * self.n:(c + 1) * self.n])
                               for c in range(self.dim)])


class BlockPreconditioner:
    """Inverse of ``P`` or ``Ps`` as a callable on global residual vectors."""

    def __init__(self, system: BlockSystem, config: PrecondConfig):
        self.system = system
        self.config = config
        L = system.layout
        self.slices = L.slices
        n_scalar = system.A_scalar.shape[0]
        dim = system.mesh.dim
        info = {}
        if config.inner_A == "exact":
            fac = factor_spd(system.A_scalar)
            self.solve_A = ComponentSolver(fac.solve, n_scalar, dim)
        else:
            theta = config.amg_theta if config.amg_theta is not None else default_theta(dim, L.k)
            cycles = config.amg_cycles if config.amg_cycles is not None else default_amg_cycles(dim, L.k)
            ml = amg_setup(system.A_scalar, theta, interpolation=config.amg_interpolation,
                           second_pass=config.amg_second_pass)
            self.amg = ml
            info.update(amg_theta=theta, amg_cycles=cycles, amg_levels=ml.sizes,
                        amg_complexity=ml.operator_complexity())
            self.solve_A = ComponentSolver(lambda r: ml.apply(r, cycles), n_scalar, dim)

        wq, wm = config.omega_q, config.omega_m
        if config.inner_mass == "exact":
            sq = BlockDiagonalSolver(wq * system.Q_blocks)
            sm = BlockDiagonalSolver(wm * system.M_blocks)
            self.solve_Q, self.solve_M = sq.solve, sm.solve
        else:
            gq = GaussSeidel(wq * system.Q)
            gm = GaussSeidel(wm * system.M)
            k = config.mass_sweeps
            self.solve_Q = lambda r: gq.apply(r, k)
            self.solve_M = lambda r: gm.apply(r, k)
        self.info = info
        n = L.n_total
        self.shape = (n, n)

    def apply_block_diag(self, r) -> np.ndarray:
        su, sp_, sl = self.slices
        z = np.empty_like(r, dtype=float)
        z[su] = self.solve_A(r[su])
        z[sp_] = self.solve_Q(r[sp_])
        z[sl] = self.solve_M(r[sl])
        return z

    def apply_block_sgs(self, r) -> np.ndarray:
        su, sp_, sl = self.slices
        B, C = self.system.B, self.system.C
        yu = self.solve_A(r[su])
        yp = self.solve_Q(r[sp_] - B @ yu)
        yl = self.solve_M(r[sl] - C @ yu)
        z = np.empty_like(r, dtype=float)
        z[su] = self.solve_A(r[su] - B.T @ yp - C.T @ yl)
        z[sp_] = yp
        z[sl] = yl
        return z

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if self.config.variant == "diag":
            return self.apply_block_diag(r)
        return self.apply_block_sgs(r)

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self, dtype=float)

    def to_dense(self) -> np.ndarray:
        """Materialize the operator column by column (small systems only)."""
        n = self.shape[0]
        out = np.empty((n, n))
        e = np.zeros(n)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = self(e)
            e[j] = 0.0
        return out


def apply_block_diag(precond: BlockPreconditioner, r) -> np.ndarray:
    return precond.apply_block_diag(np.asarray(r, dtype=float))


def apply_block_sgs(precond: BlockPreconditioner, r) -> np.ndarray:
    return precond.apply_block_sgs(np.asarray(r, dtype=float))


def build_preconditioner(system: BlockSystem, config: PrecondConfig | None = None) -> BlockPreconditioner:
    return BlockPreconditioner(system, config or PrecondConfig(omega_q=default_omega_q(system.mesh.dim)))

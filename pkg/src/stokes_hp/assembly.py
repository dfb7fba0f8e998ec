"""Assembly of the hybridized interior-penalty Stokes system.

Forms, with ``[v] = v+ - v-`` on interior facets, ``[v] = v`` on boundary
facets and ``{.}`` the average (the one-sided value on the boundary)::

    a(u, v) = sum_K (grad u, grad v)_K
              + sum_F (eta/h_F) ([u], [v])_F
              - sum_F ([u] (x) n+, {grad v})_F - sum_F ([v] (x) n+, {grad u})_F
    b((p, lam), v) = -sum_K (p, div v)_K + sum_F ([v . n], lam)_F

so that the matrix system is::

    [A  B^T C^T] [u]   [f]
    [B  0   0  ] [p] = [0]
    [C  0   0  ] [l]   [g]

Dirichlet data enters through symmetric Nitsche terms in ``f`` and through
``g``; no degrees of freedom are eliminated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .basis import PolyBasis
from .manufactured import ManufacturedSolution
from .mesh import Mesh
from .quadrature import quadrature, reference_measure
from .spaces import DofLayout, build_layout


def default_penalty(k: int, dim: int) -> float:
    """``4 k^2`` in 2d and ``6 k^2`` in 3d."""
    return (4.0 if dim == 2 else 6.0) * k * k


@dataclass(frozen=True)
class AssemblyConfig:
    """Discretization parameters.

    ``eta`` and ``quad_degree`` default to :func:`default_penalty` and
    ``2k + 2``.
    """

    k: int
    eta: float | None = None
    quad_degree: int | None = None
    velocity_basis: str = "nodal"

    def __post_init__(self):
        if self.eta is not None and self.eta <= 0:
            raise ValueError("penalty eta must be positive")

    def penalty(self, dim: int) -> float:
        return default_penalty(self.k, dim) if self.eta is None else float(self.eta)

    @property
    def qdeg(self) -> int:
        return 2 * self.k + 2 if self.quad_degree is None else int(self.quad_degree)


class _CellData:
    """Basis tables at the cell quadrature points of every cell."""

    def __init__(self, mesh: Mesh, ubasis: PolyBasis, pbasis: PolyBasis, degree: int):
        rule = quadrature(mesh.dim, degree)
        self.rule = rule
        self.W = rule.weights[None, :] * np.abs(np.linalg.det(mesh.jacobians))[:, None]
        x0 = mesh.vertices[mesh.cells[:, 0]]
        self.X = x0[:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, rule.points)
        self.phi, gref = ubasis.eval(rule.points)          # (nb, nq), (nb, nq, d)
        self.grad = np.einsum("cji,bqj->cbqi", mesh.inverse_jacobians, gref)
        self.psi = pbasis.eval(rule.points)[0]              # (np, nq)


class _FacetData:
    """Traces of the cell bases at facet quadrature points.

    Points are generated on each facet and pulled back into both adjacent
    cells, so plus and minus traces match point by point.
    """

    def __init__(self, mesh: Mesh, ubasis: PolyBasis, lbasis: PolyBasis, degree: int):
        ft = mesh.facet_table
        dim = mesh.dim
        rule = quadrature(dim - 1, degree) if dim > 1 else None
        eta_pts = rule.points
        self.W = rule.weights[None, :] * (ft.measures / reference_measure(dim - 1))[:, None]
        fx = mesh.vertices[ft.vertices]                     # (nf, dim, dim)
        self.X = fx[:, :1, :] + np.einsum("fji,qj->fqi",
                                          fx[:, 1:, :] - fx[:, :1, :], eta_pts)
        self.n = ft.normals
        self.h = ft.h
        self.cells = ft.cells
        self.interior = ft.cells[:, 1] >= 0
        self.mu = lbasis.eval(eta_pts)[0]                   # (nl, nqf)
        nf, nq = self.X.shape[:2]
        nb = ubasis.n_funcs
        self.phi = np.zeros((2, nf, nb, nq))
        self.grad = np.zeros((2, nf, nb, nq, dim))
        for s in (0, 1):
            ids = np.flatnonzero(ft.cells[:, s] >= 0)
            cid = ft.cells[ids, s]
            ref = mesh.to_reference(cid, self.X[ids])
            ref = np.clip(ref, 0.0, 1.0)
            v, g = ubasis.eval(ref.reshape(-1, dim))
            self.phi[s, ids] = v.reshape(nb, len(ids), nq).transpose(1, 0, 2)
            g = g.reshape(nb, len(ids), nq, dim).transpose(1, 0, 2, 3)
            self.grad[s, ids] = np.einsum("fji,fbqj->fbqi", mesh.inverse_jacobians[cid], g)
        self.dn = np.einsum("sfbqi,fi->sfbq", self.grad, self.n)
        self.sign = np.array([1.0, -1.0])
        # average weights: 1/2 inside, 1 on the boundary (minus side absent)
        self.avg = np.where(self.interior, 0.5, 1.0)


def _coo(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


class HybridAssembler:
    """Assembles every operator of the hybridized system on one mesh.

    Basis tables are built lazily and shared between the operators.
    """

    def __init__(self, mesh: Mesh, config: AssemblyConfig | int, layout: DofLayout | None = None):
        if isinstance(config, int):
            config = AssemblyConfig(k=config)
        self.mesh = mesh
        self.config = config
        self.layout = layout or build_layout(mesh, config.k)
        if self.layout.k != config.k:
            raise ValueError("layout and config disagree on the order k")
        d, k = mesh.dim, config.k
        self.ubasis = PolyBasis(d, k, config.velocity_basis)
        self.pbasis = PolyBasis(d, k - 1, "nodal")
        self.lbasis = PolyBasis(d - 1, k, "nodal")
        self.eta = config.penalty(d)

    @cached_property
    def cell_data(self) -> _CellData:
        return _CellData(self.mesh, self.ubasis, self.pbasis, self.config.qdeg)

    @cached_property
    def facet_data(self) -> _FacetData:
        return _FacetData(self.mesh, self.ubasis, self.lbasis, self.config.qdeg)

    # -- index helpers -------------------------------------------------
    def _scalar_dofs(self, cells):
        nb = self.layout.nb_u
        return cells[..., None] * nb + np.arange(nb)

    # -- velocity block ------------------------------------------------
    def scalar_laplacian(self, eta=None, consistency=True) -> sp.csr_matrix:
        """Scalar SIP matrix acting on one velocity component."""
        eta = self.eta if eta is None else eta
        cd, fd = self.cell_data, self.facet_data
        nc, nb = self.mesh.n_cells, self.layout.nb_u
        n = nc * nb
        rows, cols, vals = [], [], []

        Ak = np.einsum("cbqi,cdqi,cq->cbd", cd.grad, cd.grad, cd.W)
        dofs = self._scalar_dofs(np.arange(nc))
        rows.append(np.broadcast_to(dofs[:, :, None], Ak.shape))
        cols.append(np.broadcast_to(dofs[:, None, :], Ak.shape))
        vals.append(Ak)

        pen = eta / fd.h
        for s in (0, 1):
            for t in (0, 1):
                ids = np.flatnonzero(fd.cells[:, s] >= 0) if s == t else np.flatnonzero(fd.interior)
                if len(ids) == 0:
                    continue
                ss, st = fd.sign[s], fd.sign[t]
                W = fd.W[ids]
                ps, pt = fd.phi[s, ids], fd.phi[t, ids]
                blk = ss * st * pen[ids, None, None] * np.einsum("fiq,fjq,fq->fij", ps, pt, W)
                if consistency:
                    w = fd.avg[ids][:, None, None]
                    ds, dt = fd.dn[s, ids], fd.dn[t, ids]
                    blk -= w * st * np.einsum("fjq,fiq,fq->fij", pt, ds, W)
                    blk -= w * ss * np.einsum("fiq,fjq,fq->fij", ps, dt, W)
                r = self._scalar_dofs(fd.cells[ids, s])
                c = self._scalar_dofs(fd.cells[ids, t])
                rows.append(np.broadcast_to(r[:, :, None], blk.shape))
                cols.append(np.broadcast_to(c[:, None, :], blk.shape))
                vals.append(blk)
        return _coo(np.concatenate([r.ravel() for r in rows]),
                    np.concatenate([c.ravel() for c in cols]),
                    np.concatenate([v.ravel() for v in vals]), (n, n))

    def assemble_A(self) -> sp.csr_matrix:
        As = self.scalar_laplacian()
        return sp.block_diag([As] * self.mesh.dim, format="csr")

    def gram_1h(self) -> sp.csr_matrix:
        """Gram matrix of the broken ``H1`` norm ``||.||_{1,h}``."""
        G = self.scalar_laplacian(eta=1.0, consistency=False)
        return sp.block_diag([G] * self.mesh.dim, format="csr")

    # -- constraint blocks ---------------------------------------------
    def assemble_B(self) -> sp.csr_matrix:
        cd, L = self.cell_data, self.layout
        Bk = -np.einsum("iq,cjqd,cq->cidj", cd.psi, cd.grad, cd.W)  # (nc, np, d, nb)
        rows = L.cell_p_dofs()[:, :, None, None]
        cols = L.cell_u_dofs()[:, None, :, :]
        shape = Bk.shape
        return _coo(np.broadcast_to(rows, shape), np.broadcast_to(cols, shape), Bk,
                    (L.n_p, L.n_u))

    def assemble_C(self) -> sp.csr_matrix:
        fd, L = self.facet_data, self.layout
        udofs = L.cell_u_dofs()
        ldofs = L.facet_l_dofs()
        rows, cols, vals = [], [], []
        for s in (0, 1):
            ids = np.flatnonzero(fd.cells[:, s] >= 0)
            blk = fd.sign[s] * np.einsum("iq,fjq,fq,fc->ficj", fd.mu, fd.phi[s, ids],
                                         fd.W[ids], fd.n[ids])
            r = ldofs[ids][:, :, None, None]
            c = udofs[fd.cells[ids, s]][:, None, :, :]
            rows.append(np.broadcast_to(r, blk.shape).ravel())
            cols.append(np.broadcast_to(c, blk.shape).ravel())
            vals.append(blk.ravel())
        return _coo(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                    (L.n_l, L.n_u))

    # -- mass matrices ---------------------------------------------------
    def pressure_mass_blocks(self) -> np.ndarray:
        cd = self.cell_data
        return np.einsum("iq,jq,cq->cij", cd.psi, cd.psi, cd.W)

    def multiplier_mass_blocks(self) -> np.ndarray:
        fd = self.facet_data
        return np.einsum("iq,jq,fq,f->fij", fd.mu, fd.mu, fd.W, fd.h)

    def assemble_mass_Q(self) -> sp.csr_matrix:
        return sp.block_diag(list(self.pressure_mass_blocks()), format="csr")

    def assemble_mass_M(self) -> sp.csr_matrix:
        return sp.block_diag(list(self.multiplier_mass_blocks()), format="csr")

    # -- right-hand side ---------------------------------------------------
    def assemble_rhs(self, ms: ManufacturedSolution) -> np.ndarray:
        L, cd, fd = self.layout, self.cell_data, self.facet_data
        d, nb = self.mesh.dim, L.nb_u
        rhs = np.zeros(L.n_total)
        fu = rhs[:L.n_u].reshape(d, self.mesh.n_cells, nb)

        fval = ms.f(cd.X)                                    # (nc, nq, d)
        fu += np.einsum("cqd,bq,cq->dcb", fval, cd.phi, cd.W)

        bnd = np.flatnonzero(~fd.interior)
        if len(bnd):
            g = ms.g(fd.X[bnd])                              # (nb_f, nq, d)
            W = fd.W[bnd]
            kern = (self.eta / fd.h[bnd])[:, None, None] * fd.phi[0, bnd] - fd.dn[0, bnd]
            contrib = np.einsum("fbq,fqd,fq->dfb", kern, g, W)
            np.add.at(fu, (slice(None), fd.cells[bnd, 0]), contrib)
            gn = np.einsum("fqd,fd->fq", g, fd.n[bnd])
            gl = np.einsum("iq,fq,fq->fi", fd.mu, gn, W)
            rhs[L.n_u + L.n_p + L.facet_l_dofs()[bnd]] = gl
        return rhs

    # -- evaluation and diagnostics -------------------------------------------
    def velocity_coefficients(self, u) -> np.ndarray:
        """Reshape the velocity block to ``(n_cells, dim, nb)``."""
        L = self.layout
        return np.asarray(u[:L.n_u]).reshape(self.mesh.dim, self.mesh.n_cells, L.nb_u).transpose(1, 0, 2)

    def divergence_at_qp(self, u) -> np.ndarray:
        cu = self.velocity_coefficients(u)
        return np.einsum("cdb,cbqd->cq", cu, self.cell_data.grad)

    def check_divergence(self, u) -> float:
        """Max ``|div u_h|`` over all cell quadrature points."""
        return float(np.abs(self.divergence_at_qp(u)).max())

    def normal_jumps_at_qp(self, u) -> np.ndarray:
        fd = self.facet_data
        cu = self.velocity_coefficients(u)
        ids = np.flatnonzero(fd.interior)
        jump = np.zeros((len(ids), fd.X.shape[1]))
        for s in (0, 1):
            vals = np.einsum("fdb,fbq->fqd", cu[fd.cells[ids, s]], fd.phi[s, ids])
            jump += fd.sign[s] * np.einsum("fqd,fd->fq", vals, fd.n[ids])
        return jump

    def check_normal_jumps(self, u) -> float:
        """Max ``|[u_h . n]|`` over interior-facet quadrature points."""
        j = self.normal_jumps_at_qp(u)
        return float(np.abs(j).max()) if j.size else 0.0

    def check_normal_jump_moments(self, u) -> float:
        """Max ``|int_F [u_h . n] mu_i|`` over interior facets and multiplier basis functions."""
        L = self.layout
        Cu = (self.assemble_C() @ np.asarray(u)[:L.n_u]).reshape(L.n_facets, L.nb_l)
        inner = Cu[self.facet_data.interior]
        return float(np.abs(inner).max()) if inner.size else 0.0

    def max_velocity(self, u) -> float:
        cu = self.velocity_coefficients(u)
        vals = np.einsum("cdb,bq->cqd", cu, self.cell_data.phi)
        return float(np.abs(vals).max())

    def norm_1h(self, v) -> float:
        v = np.asarray(v)[:self.layout.n_u]
        return float(np.sqrt(max(v @ (self.gram_1h() @ v), 0.0)))

    def norm_lambda(self, xi) -> float:
        L = self.layout
        xi = np.asarray(xi)
        if len(xi) == L.n_total:
            xi = xi[L.slices[2]]
        blocks = self.multiplier_mass_blocks()
        x = xi.reshape(L.n_facets, L.nb_l)
        return float(np.sqrt(max(np.einsum("fi,fij,fj->", x, blocks, x), 0.0)))

    def l2_errors(self, x, ms: ManufacturedSolution, pressure_mean_zero=True):
        """``L2`` errors of velocity and pressure against ``ms``.

        Uses a rule of degree ``2k + 4``; the discrete pressure mean is removed
        first when ``pressure_mean_zero``.
        """
        L, mesh = self.layout, self.mesh
        rule = quadrature(mesh.dim, 2 * self.config.k + 4)
        W = rule.weights[None, :] * np.abs(np.linalg.det(mesh.jacobians))[:, None]
        x0 = mesh.vertices[mesh.cells[:, 0]]
        X = x0[:, None, :] + np.einsum("cij,qj->cqi", mesh.jacobians, rule.points)
        phi = self.ubasis.eval(rule.points)[0]
        psi = self.pbasis.eval(rule.points)[0]
        cu = self.velocity_coefficients(x)
        uh = np.einsum("cdb,bq->cqd", cu, phi)
        eu = uh - ms.u_exact(X)
        cp = np.asarray(x[L.slices[1]]).reshape(mesh.n_cells, L.nb_p)
        ph = cp @ psi
        if pressure_mean_zero:
            area = W.sum()
            ph = ph - (W * ph).sum() / area
        pe = ms.p_exact(X)
        if pressure_mean_zero:
            pe = pe - (W * pe).sum() / W.sum()
        return (float(np.sqrt((W[..., None] * eu ** 2).sum())),
                float(np.sqrt((W * (ph - pe) ** 2).sum())))

    def project_velocity(self, fun) -> np.ndarray:
        """Cellwise ``L2`` projection of a vector field onto the velocity space."""
        cd = self.cell_data
        Mk = np.einsum("iq,jq,cq->cij", cd.phi, cd.phi, cd.W)
        rhs = np.einsum("cqd,bq,cq->cbd", fun(cd.X), cd.phi, cd.W)
        coef = np.linalg.solve(Mk, rhs)                      # (nc, nb, d)
        return coef.transpose(2, 0, 1).ravel()

    def project_pressure(self, fun) -> np.ndarray:
        cd = self.cell_data
        Mk = self.pressure_mass_blocks()
        rhs = np.einsum("cq,iq,cq->ci", fun(cd.X), cd.psi, cd.W)
        return np.linalg.solve(Mk, rhs[..., None])[..., 0].ravel()


@dataclass
class BlockSystem:
    """Assembled saddle-point system and its building blocks."""

    mesh: Mesh
    layout: DofLayout
    config: AssemblyConfig
    assembler: HybridAssembler = field(repr=False)
    A_scalar: sp.csr_matrix = field(repr=False)
    B: sp.csr_matrix = field(repr=False)
    C: sp.csr_matrix = field(repr=False)
    Q_blocks: np.ndarray = field(repr=False)
    M_blocks: np.ndarray = field(repr=False)
    rhs: np.ndarray = field(repr=False)
    solution: ManufacturedSolution | None = None

    @cached_property
    def A(self) -> sp.csr_matrix:
        """Velocity block; one copy of ``A_scalar`` per component."""
        return sp.block_diag([self.A_scalar] * self.mesh.dim, format="csr")

    @cached_property
    def Q(self) -> sp.csr_matrix:
        return sp.block_diag(list(self.Q_blocks), format="csr")

    @cached_property
    def M(self) -> sp.csr_matrix:
        return sp.block_diag(list(self.M_blocks), format="csr")

    @cached_property
    def calB(self) -> sp.csr_matrix:
        """Stacked constraint operator ``[B; C]``."""
        return sp.vstack([self.B, self.C], format="csr")

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.A, self.B.T, self.C.T],
                        [self.B, None, None],
                        [self.C, None, None]], format="csr")

    def nullspace_vector(self) -> np.ndarray:
        return self.layout.nullspace_vector()

    def zero_mean_pressure(self, x) -> np.ndarray:
        """Pressure block shifted to zero mean against ``Q``."""
        p = np.asarray(x)[self.layout.slices[1]]
        one = np.ones_like(p)
        Q1 = self.Q @ one
        return p - (Q1 @ p) / (Q1 @ one)

    def matrices(self) -> dict:
        return {"A": self.A, "B": self.B, "C": self.C, "Q": self.Q, "M": self.M,
                "system": self.matrix}


def assemble_system(mesh: Mesh, config: AssemblyConfig | int,
                    solution: ManufacturedSolution | None = None) -> BlockSystem:
    """Assemble ``A, B, C, Q, M`` and the right-hand side ``(f, 0, g)``."""
    asm = HybridAssembler(mesh, config)
    rhs = asm.assemble_rhs(solution) if solution is not None else np.zeros(asm.layout.n_total)
    return BlockSystem(mesh=mesh, layout=asm.layout, config=asm.config, assembler=asm,
                       A_scalar=asm.scalar_laplacian(), B=asm.assemble_B(),
                       C=asm.assemble_C(),
                       Q_blocks=asm.pressure_mass_blocks(),
                       M_blocks=asm.multiplier_mass_blocks(),
                       rhs=rhs, solution=solution)


# functional entry points -------------------------------------------------

def assemble_A(mesh, layout, config):
    return HybridAssembler(mesh, config, layout).assemble_A()


def assemble_B(mesh, layout, config=None):
    return HybridAssembler(mesh, config or AssemblyConfig(layout.k), layout).assemble_B()


def assemble_C(mesh, layout, config=None):
    return HybridAssembler(mesh, config or AssemblyConfig(layout.k), layout).assemble_C()


def assemble_rhs(mesh, layout, config, ms):
    return HybridAssembler(mesh, config, layout).assemble_rhs(ms)


def assemble_mass_Q(mesh, layout, config=None):
    return HybridAssembler(mesh, config or AssemblyConfig(layout.k), layout).assemble_mass_Q()


def assemble_mass_M(mesh, layout, config=None):
    return HybridAssembler(mesh, config or AssemblyConfig(layout.k), layout).assemble_mass_M()

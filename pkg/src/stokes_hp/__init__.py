"""Hybridized, exactly divergence-free DG discretization of Stokes flow with
weighted block preconditioners, classical AMG and deflated MINRES."""
from .amg import AmgHierarchy, amg_apply, amg_setup
from .assembly import AssemblyConfig, BlockSystem, HybridAssembler, assemble_system
from .basis import PolyBasis, dim_P
from .experiments import ConfigError, ExperimentSpec, StudyResult, run_study
from .gmsh import read_gmsh, write_gmsh
from .manufactured import ManufacturedSolution, get_solution
from .mesh import Mesh, MeshError, generate_structured
from .preconditioners import BlockPreconditioner, PrecondConfig
from .quadrature import QuadratureRule, quadrature
from .spaces import DofLayout, build_layout
from .sparse_linalg import SolveReport, minres
from .spectrum import SpectrumReport, compute_schur_spectrum

__version__ = "0.1.0"

__all__ = [
    "AmgHierarchy", "AssemblyConfig", "BlockPreconditioner", "BlockSystem", "ConfigError",
    "DofLayout", "ExperimentSpec", "HybridAssembler", "ManufacturedSolution", "Mesh",
    "MeshError", "PolyBasis", "PrecondConfig", "QuadratureRule", "SolveReport",
    "SpectrumReport", "StudyResult", "amg_apply", "amg_setup", "assemble_system",
    "build_layout", "compute_schur_spectrum", "dim_P", "generate_structured", "get_solution",
    "minres", "quadrature", "read_gmsh", "run_study", "write_gmsh",
]

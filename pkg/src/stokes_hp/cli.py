"""``stokes-hp`` command-line interface.

Exit codes: 0 success, 2 a solve did not converge, 3 invalid configuration,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .experiments import STUDIES, ConfigError, ExperimentSpec, jsonable, run_study
from .mesh import MeshError
from .preconditioners import PrecondConfig, default_omega_q

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stokes-hp",
                description="Hybridized divergence-free DG Stokes solver with block preconditioners.")
    p.add_argument("study", choices=STUDIES)
    p.add_argument("--dim", type=int, default=2, choices=(2, 3))
    p.add_argument("--order", "-k", type=int, default=2)
    src = p.add_mutually_exclusive_group()
    src.add_argument("--structured", type=int, metavar="N",
                     help="structured simplicial mesh with N cells per side")
    src.add_argument("--mesh", action="append", metavar="PATH",
                     help="Gmsh mesh file (repeat for multi-level studies)")
    p.add_argument("--levels", type=int, nargs="+", metavar="N",
                   help="structured resolutions for h_study/convergence/spectrum")
    p.add_argument("--ratios", type=float, nargs="+", help="w_q/w_m ratios for omega_sweep")
    p.add_argument("--problem", help="manufactured solution name")
    p.add_argument("--precond", choices=("diag", "sgs"), default="diag")
    p.add_argument("--inner", choices=("exact", "approx"), default="exact")
    p.add_argument("--omega-q", type=float, default=None)
    p.add_argument("--omega-m", type=float, default=1.0)
    p.add_argument("--amg-theta", type=float, default=None)
    p.add_argument("--amg-cycles", type=int, default=None)
    p.add_argument("--mass-sweeps", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--maxiter", type=int, default=2000)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--dump-matrices", metavar="DIR")
    p.add_argument("--deterministic", action="store_true",
                   help="serial execution; CSV rows reproducible bit for bit")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-plots", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def spec_from_args(args) -> ExperimentSpec:
    omega_q = args.omega_q if args.omega_q is not None else default_omega_q(args.dim)
    inexact = args.inner == "approx"
    pc = PrecondConfig(omega_q=omega_q, omega_m=args.omega_m,
                       inner_A="amg" if inexact else "exact",
                       inner_mass="sgs" if inexact else "exact",
                       variant=args.precond, amg_cycles=args.amg_cycles,
                       amg_theta=args.amg_theta, mass_sweeps=args.mass_sweeps)
    kw = {}
    if args.structured is not None:
        kw["N"] = args.structured
    if args.mesh:
        kw["mesh_paths"] = tuple(args.mesh)
    if args.levels:
        kw["levels"] = tuple(args.levels)
    if args.ratios:
        kw["ratios"] = tuple(args.ratios)
    return ExperimentSpec(study=args.study, dim=args.dim, k=args.order, tol=args.tol,
                          maxiter=args.maxiter, precond=pc, problem=args.problem,
                          out=args.out, dump_matrices=args.dump_matrices,
                          deterministic=args.deterministic, jobs=args.jobs,
                          plots=not args.no_plots, **kw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except (ConfigError, ValueError) as exc:
        print(f"stokes-hp: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run_study(spec)
    except ConfigError as exc:
        print(f"stokes-hp: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, MeshError) as exc:
        print(f"stokes-hp: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    print(json.dumps({"study": result.study, **jsonable(result.summary)}, sort_keys=True))
    if not result.all_converged:
        print("stokes-hp: MINRES did not converge", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Study drivers: single solves, refinement studies, weight sweeps, spectra.

Each driver returns a :class:`StudyResult` (CSV-ready rows plus a summary)
and, when ``spec.out`` is set, writes one JSON report per run, an aggregated
CSV per study and a figure next to the CSV.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .assembly import AssemblyConfig, BlockSystem, assemble_system
from .gmsh import read_gmsh
from .manufactured import DEFAULT_SOLUTION, get_solution
from .mesh import Mesh, generate_structured
from .preconditioners import BlockPreconditioner, PrecondConfig
from .sparse_linalg import minres, write_matrix_market
from .spectrum import compute_schur_spectrum, relative_drift

log = logging.getLogger(__name__)

STUDIES = ("solve", "h_study", "omega_sweep", "spectrum", "convergence")
DEFAULT_LEVELS = {"h_study": (8, 16, 32), "convergence": (8, 16, 32), "spectrum": (4, 8)}
DEFAULT_RATIOS = (1 / 32, 1 / 8, 1, 8, 16, 24, 32, 64, 128)
CONVERGENCE_TOL = 1e-10


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one study.

    The mesh source is either a structured ``N`` (or ``levels`` for
    multi-level studies) or one or more Gmsh files in ``mesh_paths``.
    """

    study: str = "solve"
    dim: int = 2
    k: int = 2
    N: int = 16
    levels: tuple = ()
    mesh_paths: tuple = ()
    ratios: tuple = DEFAULT_RATIOS
    tol: float = 1e-8
    maxiter: int = 2000
    precond: PrecondConfig = field(default_factory=PrecondConfig)
    problem: str | None = None
    out: str | None = None
    dump_matrices: str | None = None
    deterministic: bool = False
    jobs: int = 1
    plots: bool = True

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigError(f"unknown study {self.study!r}; choose from {STUDIES}")
        if self.dim not in (2, 3):
            raise ConfigError(f"dim must be 2 or 3, got {self.dim}")
        if not 2 <= self.k <= 5:
            raise ConfigError(f"order k must lie in [2, 5], got {self.k}")
        if not 0 < self.tol < 1:
            raise ConfigError(f"tolerance must lie in (0, 1), got {self.tol}")
        if self.N < 1 or any(n < 1 for n in self.levels):
            raise ConfigError("mesh resolutions must be positive")
        if any(r <= 0 for r in self.ratios):
            raise ConfigError("weight ratios must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        sol = get_solution(self.problem_name)
        if sol.dim != self.dim:
            raise ConfigError(f"problem {sol.name!r} is {sol.dim}d but dim={self.dim}")

    @property
    def problem_name(self) -> str:
        return self.problem or DEFAULT_SOLUTION[self.dim]

    @property
    def mesh_levels(self) -> list:
        """Mesh sources for multi-level studies (ints or paths)."""
        if self.mesh_paths:
            return list(self.mesh_paths)
        if self.levels:
            return list(self.levels)
        if self.study in DEFAULT_LEVELS:
            return list(DEFAULT_LEVELS[self.study])
        return [self.N]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["precond"] = self.precond.to_dict()
        d["ratios"] = list(self.ratios)
        d["levels"] = list(self.levels)
        d["mesh_paths"] = list(self.mesh_paths)
        d["problem"] = self.problem_name
        return d


@dataclass
class StudyResult:
    study: str
    rows: list
    summary: dict
    reports: list = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(r.get("converged", True) for r in self.rows)


def load_mesh(source, dim: int) -> Mesh:
    if isinstance(source, (int, np.integer)):
        return generate_structured(dim, int(source))
    mesh = read_gmsh(source)
    if mesh.dim != dim:
        raise ConfigError(f"mesh {source} is {mesh.dim}d but dim={dim}")
    return mesh


def mesh_label(source, mesh: Mesh) -> str:
    if isinstance(source, (int, np.integer)):
        return f"N{int(source)}"
    return f"{Path(source).stem}_{mesh.n_cells}"


def build_system(spec: ExperimentSpec, source) -> tuple[Mesh, BlockSystem]:
    mesh = load_mesh(source, spec.dim)
    system = assemble_system(mesh, AssemblyConfig(spec.k), get_solution(spec.problem_name))
    return mesh, system


def dump_matrices(system: BlockSystem, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name, mat in system.matrices().items():
        write_matrix_market(d / f"{name}.mtx", mat)
    np.savetxt(d / "rhs.txt", system.rhs)


def solve_system(system: BlockSystem, pconfig: PrecondConfig, tol: float, maxiter: int):
    """Preconditioned MINRES on an assembled system; returns ``(x, report)``."""
    t0 = time.perf_counter()
    P = BlockPreconditioner(system, pconfig)
    t_setup = time.perf_counter() - t0
    x, rep = minres(system.matrix, system.rhs, P, tol=tol, maxiter=maxiter,
                    deflation_vectors=system.nullspace_vector())
    rep.diagnostics.update(P.info)
    rep.diagnostics["setup_time"] = t_setup
    return x, rep


def solution_diagnostics(system: BlockSystem, x) -> dict:
    asm = system.assembler
    umax = asm.max_velocity(x)
    out = {"div_max": asm.check_divergence(x), "jump_max": asm.check_normal_jumps(x),
           "jump_moment_max": asm.check_normal_jump_moments(x), "u_max": umax,
           "raw_pressure_mean": float(np.ones(system.layout.n_p) @ (system.Q @ x[system.layout.slices[1]]))}
    if system.solution is not None:
        out["err_u"], out["err_p"] = asm.l2_errors(x, system.solution)
    return out


def _run_one(spec: ExperimentSpec, source, pconfig: PrecondConfig | None = None,
             tol: float | None = None):
    """Assemble and solve one configuration; returns ``(row, report dict)``."""
    pconfig = pconfig or spec.precond
    tol = spec.tol if tol is None else tol
    t0 = time.perf_counter()
    mesh, system = build_system(spec, source)
    t_asm = time.perf_counter() - t0
    label = mesh_label(source, mesh)
    if spec.dump_matrices:
        dump_matrices(system, Path(spec.dump_matrices) / label)
    x, rep = solve_system(system, pconfig, tol, spec.maxiter)
    diag = solution_diagnostics(system, x)
    L = system.layout
    row = {"label": label, "k": spec.k, "N": source if isinstance(source, int) else "",
           "n_cells": mesh.n_cells, "h": mesh.h_max,
           "n_u": L.n_u, "n_p": L.n_p, "n_l": L.n_l,
           "precond": pconfig.variant, "inner": "exact" if pconfig.inner_A == "exact" else "approx",
           "omega_q": pconfig.omega_q, "omega_m": pconfig.omega_m,
           "iterations": rep.iterations, "converged": rep.converged,
           "true_residual": rep.true_residual, **diag}
    report = {"config": replace(spec, precond=pconfig).to_dict(), "tol": tol, "mesh": label,
              "sizes": L.sizes(), "solve": rep.to_dict(), "diagnostics": diag,
              "assembly_time": t_asm}
    log.info("%s %s k=%d w=(%g,%g): %d iterations%s", spec.study, label, spec.k,
             pconfig.omega_q, pconfig.omega_m, rep.iterations,
             "" if rep.converged else " (not converged)")
    return row, report


def _map(spec: ExperimentSpec, tasks):
    """Run ``_run_one`` over ``tasks`` (tuples of extra args), in order."""
    if spec.jobs > 1 and not spec.deterministic and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as ex:
            futs = [ex.submit(_run_one, spec, *t) for t in tasks]
            return [f.result() for f in futs]
    return [_run_one(spec, *t) for t in tasks]


def flatness(iterations) -> float:
    it = [i for i in iterations if i > 0]
    return max(it) / min(it) if it else float("nan")


def observed_orders(h, err) -> list:
    """``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; NaN for the first level."""
    out = [float("nan")]
    for i in range(1, len(err)):
        if err[i] > 0 and err[i - 1] > 0:
            out.append(math.log(err[i - 1] / err[i]) / math.log(h[i - 1] / h[i]))
        else:
            out.append(float("nan"))
    return out


# -- studies -------------------------------------------------------------------

def run_solve(spec: ExperimentSpec) -> StudyResult:
    source = spec.mesh_paths[0] if spec.mesh_paths else spec.N
    row, report = _run_one(spec, source)
    summary = {"iterations": row["iterations"], "converged": row["converged"]}
    return finish(spec, StudyResult("solve", [row], summary, [report]))


def run_h_study(spec: ExperimentSpec, N_list=None) -> StudyResult:
    levels = list(N_list) if N_list is not None else spec.mesh_levels
    if len(levels) < 3:
        raise ConfigError("an h study needs at least 3 mesh levels")
    results = _map(spec, [(n,) for n in levels])
    rows = [r for r, _ in results]
    its = [r["iterations"] for r in rows]
    summary = {"iterations": its, "flatness": flatness(its),
               "converged": all(r["converged"] for r in rows)}
    return finish(spec, StudyResult("h_study", rows, summary, [rep for _, rep in results]))


def run_omega_sweep(spec: ExperimentSpec, ratio_list=None) -> StudyResult:
    ratios = list(ratio_list) if ratio_list is not None else list(spec.ratios)
    source = spec.mesh_paths[0] if spec.mesh_paths else spec.N
    base = asdict(spec.precond)
    base.pop("omega_q")
    base.pop("omega_m")
    tasks = [(source, PrecondConfig.from_ratio(r, **base)) for r in ratios]
    results = _map(spec, tasks)
    rows = []
    for r, (row, _) in zip(ratios, results):
        rows.append({"ratio": r, **row})
    its = [row["iterations"] for row in rows]
    i_min = int(np.argmin(its))
    summary = {"ratios": ratios, "iterations": its, "argmin_ratio": ratios[i_min],
               "min_iterations": its[i_min],
               "converged": all(r["converged"] for r in rows)}
    if 1 in ratios or 1.0 in ratios:
        summary["baseline_iterations"] = its[ratios.index(1)]
    return finish(spec, StudyResult("omega_sweep", rows, summary, [rep for _, rep in results]))


def run_convergence(spec: ExperimentSpec, N_list=None) -> StudyResult:
    levels = list(N_list) if N_list is not None else spec.mesh_levels
    if len(levels) < 3:
        raise ConfigError("a convergence study needs at least 3 mesh levels")
    tol = min(spec.tol, CONVERGENCE_TOL)
    results = _map(spec, [(n, None, tol) for n in levels])
    rows = [r for r, _ in results]
    h = [r["h"] for r in rows]
    ru = observed_orders(h, [r["err_u"] for r in rows])
    rp = observed_orders(h, [r["err_p"] for r in rows])
    for r, a, b in zip(rows, ru, rp):
        r["rate_u"], r["rate_p"] = a, b
    summary = {"rate_u": ru[1:], "rate_p": rp[1:],
               "min_rate_u": float(np.nanmin(ru[1:])), "min_rate_p": float(np.nanmin(rp[1:])),
               "max_div": max(r["div_max"] for r in rows),
               "max_jump": max(r["jump_max"] for r in rows),
               "converged": all(r["converged"] for r in rows)}
    return finish(spec, StudyResult("convergence", rows, summary, [rep for _, rep in results]))


def run_spectrum(spec: ExperimentSpec, N_list=None) -> StudyResult:
    levels = list(N_list) if N_list is not None else spec.mesh_levels
    omega = (spec.precond.omega_q, spec.precond.omega_m)
    rows, reports = [], []
    for n in levels:
        mesh, system = build_system(spec, n)
        rep = compute_schur_spectrum(system, omega, with_full=True)
        row = {"label": mesh_label(n, mesh), **{k: v for k, v in rep.to_dict().items()
                                                 if k != "constants"}}
        rows.append(row)
        reports.append({"config": spec.to_dict(), "spectrum": rep.to_dict()})
    keys = ("s_min", "s_max", "lambda_min_pos", "lambda_max_pos",
            "lambda_min_neg", "lambda_max_neg")
    drift = {k: max(relative_drift(a[k], b[k]) for a, b in zip(rows, rows[1:]))
             for k in keys} if len(rows) > 1 else {}
    summary = {"drift": drift, "max_drift": max(drift.values()) if drift else 0.0,
               "schur_positive": all(r["s_min"] > 0 for r in rows)}
    return finish(spec, StudyResult("spectrum", rows, summary, reports))


RUNNERS = {"solve": run_solve, "h_study": run_h_study, "omega_sweep": run_omega_sweep,
           "convergence": run_convergence, "spectrum": run_spectrum}


def run_study(spec: ExperimentSpec) -> StudyResult:
    return RUNNERS[spec.study](spec)


# -- output --------------------------------------------------------------------

def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_csv(path, rows) -> None:
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(jsonable(obj), fh, indent=2, sort_keys=True)


def finish(spec: ExperimentSpec, result: StudyResult) -> StudyResult:
    if spec.out is None:
        return result
    out = Path(spec.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / f"{result.study}.csv", result.rows)
    for row, rep in zip(result.rows, result.reports):
        tag = row["label"]
        if "ratio" in row:
            tag += f"_ratio{row['ratio']:g}"
        write_json(out / f"{result.study}_{tag}.json", rep)
    write_json(out / f"{result.study}_summary.json",
               {"config": spec.to_dict(), "summary": result.summary})
    if spec.plots:
        from .plotting import plot_study
        plot_study(result, out / f"{result.study}.png")
    return result

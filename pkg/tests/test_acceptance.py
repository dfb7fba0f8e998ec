"""Acceptance criteria 1-11.

Every test prints one ``CRITERION n: PASS|FAIL`` line with the measured
numbers; the lines are repeated in the pytest terminal summary.  Run this
file directly (``python tests/test_acceptance.py``) for the lines alone.
"""
import functools
import sys
import time

import numpy as np
import pytest

from stokes_hp.experiments import ExperimentSpec, flatness, run_study, solve_system
from stokes_hp.preconditioners import PrecondConfig
from stokes_hp.spectrum import compute_schur_spectrum, relative_drift

from conftest import structured_system

RESULTS = {}
LEVELS = (8, 16, 32)


def report(n, ok, detail):
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[n] = line
    print(line)
    return ok


@functools.lru_cache(maxsize=None)
def solve(dim, N, k, variant, omega_q, inexact=False, tol=1e-8, omega_m=1.0):
    s = structured_system(dim, N, k)
    cfg = PrecondConfig(omega_q=omega_q, omega_m=omega_m, variant=variant,
                        inner_A="amg" if inexact else "exact",
                        inner_mass="sgs" if inexact else "exact")
    x, rep = solve_system(s, cfg, tol, 2000)
    return rep.iterations, rep.converged, x


def its(dim, N, k, variant, omega_q, inexact=False):
    n, conv, _ = solve(dim, N, k, variant, omega_q, inexact)
    assert conv, f"no convergence for {(dim, N, k, variant, omega_q, inexact)}"
    return n


@pytest.mark.slow
def test_criterion_01_h_robustness():
    t0 = time.perf_counter()
    p = [its(2, N, 2, "diag", 24) for N in LEVELS]
    ps = [its(2, N, 2, "sgs", 24) for N in LEVELS]
    dt = time.perf_counter() - t0
    ok = (flatness(p) <= 1.15 and all(45 <= n <= 95 for n in p)
          and flatness(ps) <= 1.15 and all(24 <= n <= 60 for n in ps) and dt < 120)
    report(1, ok, f"P {p} flat {flatness(p):.3f}; Ps {ps} flat {flatness(ps):.3f}; {dt:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_02_weighting_benefit():
    w24 = [its(2, N, 2, "diag", 24) for N in LEVELS]
    w1 = [its(2, N, 2, "diag", 1) for N in LEVELS]
    res = run_study(ExperimentSpec("omega_sweep", N=16, precond=PrecondConfig(), deterministic=True))
    sw = res.summary
    ok = (all(a <= 0.6 * b for a, b in zip(w24, w1)) and sw["argmin_ratio"] >= 8
          and sw["iterations"][-1] > sw["min_iterations"] and res.all_converged)
    report(2, ok, f"w24 {w24} vs w1 {w1}; sweep N16 {dict(zip(sw['ratios'], sw['iterations']))} "
                  f"argmin {sw['argmin_ratio']:g}")
    assert ok


@pytest.mark.slow
def test_criterion_03_order_robustness():
    rows = {}
    for variant in ("diag", "sgs"):
        for N in (16, 32):
            rows[(variant, N)] = (its(2, N, 2, variant, 24), its(2, N, 4, variant, 24))
    ok = all(k4 <= k2 + 2 for k2, k4 in rows.values())
    report(3, ok, "w_q=24 (k2, k4): " + ", ".join(f"{v} N{N} {r}" for (v, N), r in rows.items()))
    assert ok


@pytest.mark.slow
def test_criterion_04_ps_dominance():
    configs = [(2, N, 2, 24, False) for N in LEVELS] + [(2, N, 2, 1, False) for N in LEVELS]
    configs += [(2, N, 4, 24, False) for N in (16, 32)]
    configs += [(2, N, 2, 24, True) for N in LEVELS]
    configs += [(3, 4, 2, 32, False), (3, 4, 2, 1, False)]
    pairs = {c: (its(c[0], c[1], c[2], "sgs", c[3], c[4]), its(c[0], c[1], c[2], "diag", c[3], c[4]))
             for c in configs}
    bad = [c for c, (a, b) in pairs.items() if not a < b]
    ok = not bad
    report(4, ok, f"{len(pairs)} configurations (Ps, P): "
                  + ", ".join(f"{c[0]}d N{c[1]} k{c[2]} w{c[3]}{' approx' if c[4] else ''} {v}"
                              for c, v in pairs.items()))
    assert ok


@functools.lru_cache(maxsize=None)
def spectra():
    return [compute_schur_spectrum(structured_system(2, N, 2), omega=(1.0, 1.0)) for N in (4, 8)]


@pytest.mark.slow
def test_criterion_05_schur_equivalence():
    t0 = time.perf_counter()
    a, b = spectra()
    dt = time.perf_counter() - t0
    drift = max(relative_drift(a.s_min, b.s_min), relative_drift(a.s_max, b.s_max))
    ok = a.s_min > 0 and b.s_min > 0 and drift < 0.10 and dt < 300
    report(5, ok, f"N4 [{a.s_min:.5g}, {a.s_max:.5g}], N8 [{b.s_min:.5g}, {b.s_max:.5g}], "
                  f"drift {drift:.2%}")
    assert ok


@pytest.mark.slow
def test_criterion_06_clustering():
    a, b = spectra()
    keys = ("lambda_min_pos", "lambda_max_pos", "lambda_min_neg", "lambda_max_neg")
    drift = max(relative_drift(getattr(a, k), getattr(b, k)) for k in keys)
    sep = all(r.lambda_min_pos > 0 and r.lambda_max_neg < 0 for r in (a, b))
    total = all(r.n_pos + r.n_neg == structured_system(2, N, 2).layout.n_total - 1
                for r, N in zip((a, b), (4, 8)))
    ok = sep and total and drift < 0.10
    report(6, ok, "; ".join(f"N{N} neg [{r.lambda_min_neg:.4g}, {r.lambda_max_neg:.4g}] "
                            f"pos [{r.lambda_min_pos:.4g}, {r.lambda_max_pos:.4g}]"
                            for r, N in zip((a, b), (4, 8))) + f"; drift {drift:.2%}")
    assert ok


@pytest.mark.slow
def test_criterion_07_divergence_free():
    # unit weights: the stopping norm then does not discount the constraint residuals
    worst = []
    info = []
    for dim, N in ((2, 8), (3, 4)):
        for k in (2, 3):
            s = structured_system(dim, N, k)
            n, conv, x = solve(dim, N, k, "sgs", 1.0, tol=1e-10)
            asm = s.assembler
            umax = asm.max_velocity(x)
            dv = asm.check_divergence(x) / umax
            jm = asm.check_normal_jump_moments(x) / umax
            worst.append(max(dv, jm) if conv else np.inf)
            info.append(f"{dim}d k{k} div {dv:.1e} jump {jm:.1e}")
    ok = max(worst) <= 1e-8
    report(7, ok, "; ".join(info))
    assert ok


@pytest.mark.slow
def test_criterion_08_convergence_rates():
    res = run_study(ExperimentSpec("convergence", levels=LEVELS, deterministic=True))
    s = res.summary
    ok = s["min_rate_u"] >= 2.9 and s["min_rate_p"] >= 1.9 and res.all_converged
    report(8, ok, f"rate_u {np.round(s['rate_u'], 3).tolist()} rate_p {np.round(s['rate_p'], 3).tolist()}")
    assert ok


@pytest.mark.slow
def test_criterion_09_approximate_inners():
    out, ok = [], True
    for variant, name in (("diag", "P"), ("sgs", "Ps")):
        ex = [its(2, N, 2, variant, 24) for N in LEVELS]
        ap = [its(2, N, 2, variant, 24, inexact=True) for N in LEVELS]
        good = all(a <= 1.5 * e for a, e in zip(ap, ex)) and flatness(ap) <= 1.3
        ok &= good
        out.append(f"{name} approx {ap} vs exact {ex} (bound {[1.5 * e for e in ex]}) "
                   f"flat {flatness(ap):.3f} {'ok' if good else 'over'}")
    report(9, ok, "; ".join(out))
    assert ok


def test_criterion_10_nullspace_identity():
    cases = [(2, N, k) for N in (1, 4, 8) for k in (2, 3, 4, 5)] + [(3, N, k) for N in (1, 2) for k in (2, 3)]
    cases += [(2, N, 2) for N in LEVELS] + [(2, 16, 4), (2, 32, 4), (3, 4, 2)]
    worst = 0.0
    for dim, N, k in cases:
        K = structured_system(dim, N, k).matrix
        r = K @ structured_system(dim, N, k).nullspace_vector()
        worst = max(worst, np.abs(r).max() / abs(K).sum(axis=1).max())
    ok = worst <= 1e-11
    report(10, ok, f"{len(cases)} systems, worst ratio {worst:.2e}")
    assert ok


@pytest.mark.slow
def test_criterion_11_3d_smoke():
    n32 = its(3, 4, 2, "sgs", 32)
    n1 = its(3, 4, 2, "sgs", 1)
    ok = n32 <= 60 and n32 <= 0.5 * n1
    report(11, ok, f"3d N4 k2 Ps: w_q=32 {n32}, w_q=1 {n1}, ratio {n32 / n1:.2f}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"] + sys.argv[1:]))

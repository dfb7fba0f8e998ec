"""Figures written next to the study CSVs (matplotlib, Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _h_study(ax, res):
    x = [r["n_cells"] for r in res.rows]
    ax.plot(x, [r["iterations"] for r in res.rows], "o-")
    ax.set_xscale("log")
    ax.set_xlabel("cells")
    ax.set_ylabel("MINRES iterations")
    ax.set_ylim(bottom=0)
    r0 = res.rows[0]
    ax.set_title(f"k={r0['k']}, {r0['precond']}/{r0['inner']}, "
                 f"flatness {res.summary['flatness']:.2f}")


def _omega_sweep(ax, res):
    ratios = [r["ratio"] for r in res.rows]
    ax.plot(ratios, [r["iterations"] for r in res.rows], "o-")
    ax.axvline(1.0, color="0.6", lw=0.8, ls="--")
    ax.set_xscale("log", base=2)
    ax.set_xlabel(r"$\omega_q / \omega_m$")
    ax.set_ylabel("MINRES iterations")
    ax.set_title(f"minimum at ratio {res.summary['argmin_ratio']:g}")


def _convergence(ax, res):
    h = np.array([r["h"] for r in res.rows])
    for key, lab in (("err_u", "velocity"), ("err_p", "pressure")):
        ax.loglog(h, [r[key] for r in res.rows], "o-", label=lab)
    ax.invert_xaxis()
    ax.set_xlabel("h")
    ax.set_ylabel(r"$L^2$ error")
    ax.legend()


def _spectrum(ax, res):
    for i, r in enumerate(res.rows):
        ax.plot([r["lambda_min_neg"], r["lambda_max_neg"]], [i, i], "C0-", lw=4)
        ax.plot([r["lambda_min_pos"], r["lambda_max_pos"]], [i, i], "C1-", lw=4)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_yticks(range(len(res.rows)), [r["label"] for r in res.rows])
    ax.set_xlabel("eigenvalues of the preconditioned system")


def _solve(ax, res):
    hist = res.reports[0]["solve"]["history"]
    ax.semilogy(hist)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative preconditioned residual")


PLOTTERS = {"h_study": _h_study, "omega_sweep": _omega_sweep, "convergence": _convergence,
            "spectrum": _spectrum, "solve": _solve}


def plot_study(result, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.6), layout="constrained")
    try:
        PLOTTERS[result.study](ax, result)
        fig.savefig(path, dpi=120)
    finally:
        plt.close(fig)

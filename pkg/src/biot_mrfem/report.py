"""Rendering of study results: delimited tables plus matplotlib figures.

Figures are rendered straight to PNG files next to the CSV output; the CSVs
remain the canonical, deterministic artifacts.
"""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _fmt(x):
    return f"{x:.17g}"


def write_csv(path, header, rows):
    """Write rows of already-stringified cells with Unix line endings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_convergence(table, path):
    """Log-log error-vs-h plot of an ErrorTable with first/second order guides."""
    h = np.array([row.h for row in table.rows])
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for field, label in (
        ("err_X", "total (X-norm)"),
        ("err_r", "rotation"),
        ("err_u", "displacement"),
        ("err_q", "flux"),
        ("err_p", "pressure"),
    ):
        e = np.array([getattr(row, field) for row in table.rows])
        if np.all(e > 0):
            ax.loglog(h, e, "o-", label=label)
    eX = np.array([row.err_X for row in table.rows])
    ax.loglog(h, eX[0] * (h / h[0]), "k--", lw=0.8, label="order 1")
    ax.loglog(h, eX[0] * (h / h[0]) ** 2, "k:", lw=0.8, label="order 2")
    ax.set_xlabel("h")
    ax.set_ylabel("error")
    ax.set_title(f"{table.method} family {table.family}, case {table.case}")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(records, path):
    """Iteration counts over the parameter grid, one trace per mesh level."""
    fig, ax = plt.subplots(figsize=(7, 4))
    levels = sorted({rec.n for rec in records})
    for n in levels:
        its = [rec.iterations for rec in records if rec.n == n]
        ax.plot(its, ".-", ms=3, lw=0.6, label=f"n={n}")
    ax.set_xlabel("parameter combination")
    ax.set_ylabel("MINRES iterations")
    ax.set_title("preconditioned iteration counts over the parameter grid")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_residual_history(report, path):
    """Relative preconditioned residual per iteration of one MINRES run."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(report.residuals, "o-", ms=3)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative preconditioned residual")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_timeloop(times, norms, path):
    """Evolution of the state norm over the time loop."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(times, norms, "o-", ms=3)
    ax.set_xlabel("time")
    ax.set_ylabel("state norm (X)")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_csv(records, path):
    header = [
        "level", "n", "h", "mu", "lambda", "alpha", "c0", "K", "dt",
        "iterations", "converged",
        "ritz_neg_min", "ritz_neg_max", "ritz_pos_min", "ritz_pos_max", "condition",
    ]
    rows = []
    for rec in records:
        neg = rec.ritz_neg or (np.nan, np.nan)
        pos = rec.ritz_pos or (np.nan, np.nan)
        rows.append(
            [str(rec.level), str(rec.n), _fmt(rec.h), _fmt(rec.mu), _fmt(rec.lam),
             _fmt(rec.alpha), _fmt(rec.c0), _fmt(rec.K), _fmt(rec.dt),
             str(rec.iterations), str(int(rec.converged)),
             _fmt(neg[0]), _fmt(neg[1]), _fmt(pos[0]), _fmt(pos[1]), _fmt(rec.condition)]
        )
    write_csv(path, header, rows)

"""Matplotlib rendering of study reports: convergence plots and surfaces.

Figures are written next to the delimited output files; the text/CSV files
remain the primary interface and every figure can be reproduced from them.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_convergence_figure", "save_surface_figure"]


def save_convergence_figure(results, path, title: str | None = None) -> None:
    """Log-log error vs h for a list of CombinationResult."""
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6), sharex=True)
    for res in results:
        rows = [r for r in res.records if r.triple_bar_error is not None]
        if not rows:
            continue
        h = np.array([1.0 / r.n for r in rows])
        tri = np.array([r.triple_bar_error for r in rows])
        l2 = np.array([r.l2_error for r in rows])
        label = f"({res.k},{res.j},{res.l}) {res.stabilizer}"
        axes[0].loglog(h, tri, "o-", label=label)
        axes[1].loglog(h, l2, "s-", label=label)
    axes[0].set_ylabel("energy norm error")
    axes[1].set_ylabel("L2 error")
    for ax in axes:
        ax.set_xlabel("h = 1/n")
        ax.grid(True, which="both", alpha=0.3)
        ax.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_surface_figure(samples: np.ndarray, path, title: str | None = None) -> None:
    """Surface plot of (x, y, u0) samples on a regular grid."""
    n = int(round(np.sqrt(samples.shape[0])))
    X = samples[:, 0].reshape(n, n)
    Y = samples[:, 1].reshape(n, n)
    U = samples[:, 2].reshape(n, n)
    fig = plt.figure(figsize=(5.5, 4.5))
    ax = fig.add_subplot(projection="3d")
    ax.plot_surface(X, Y, U, cmap="viridis", linewidth=0.2, antialiased=True)
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

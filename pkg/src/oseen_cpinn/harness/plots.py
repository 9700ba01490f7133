"""Rendered figures: loss histories and the Ra sweep."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_loss_histories(histories: dict, path, title: str = "") -> Path:
    """``histories`` maps a panel name (e.g. ``"PINN"``) to ``{label: loss array}``."""
    path = Path(path)
    fig, axes = plt.subplots(1, len(histories), figsize=(5 * len(histories), 3.8), squeeze=False)
    for ax, (panel, curves) in zip(axes[0], histories.items()):
        for label, hist in curves.items():
            ax.semilogy(np.arange(len(hist)), hist, label=label, lw=1)
        ax.set_title(panel)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.legend(fontsize=7)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_ra_sweep(rows: list[dict], path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.8))
    for form in sorted({r["formulation"] for r in rows}):
        sel = [r for r in rows if r["formulation"] == form and np.isfinite(r["grad_u_l2"])]
        ras = sorted({r["Ra"] for r in sel})
        med = [np.median([r["grad_u_l2"] for r in sel if r["Ra"] == ra]) for ra in ras]
        ax.loglog(ras, med, "o-", label=form)
    ax.set_xlabel("Ra")
    ax.set_ylabel(r"$\|\nabla u_\theta\|_{L^2}$")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

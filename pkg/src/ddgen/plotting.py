"""Matplotlib renderings for the report command.

Figures are written to files only (Agg backend); the dependency-free PGM and
SVG outputs are produced separately by the CLI.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import ImageSet


def plot_dual_profile(values: np.ndarray, cut_ranks: np.ndarray, d_knn: np.ndarray,
                      d_knn_ranks: np.ndarray, path) -> None:
    """Sorted dual coordinates with local divergences and marked cut points."""
    fig, (ax_top, ax_bot) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    ax_top.plot(np.arange(values.size), values, ".", ms=3, color="tab:blue")
    for rank in cut_ranks:
        ax_top.axvline(rank, color="tab:red", lw=0.8, ls="--")
    ax_top.set_ylabel("dual coordinate")
    ax_top.set_title("dual profile with selected cut points")
    if d_knn.size:
        ax_bot.plot(d_knn_ranks, d_knn, color="tab:orange", lw=1.0)
    ax_bot.set_xlabel("rank")
    ax_bot.set_ylabel("local divergence")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sample_grid(real: ImageSet, generated: ImageSet, path, per_row: int = 6) -> None:
    """First images of each set as grayscale heatmaps, real row above generated."""
    n_real = min(per_row, real.count)
    n_gen = min(per_row, generated.count)
    rows = (1 if n_real else 0) + (1 if n_gen else 0)
    if rows == 0:
        return
    fig, axes = plt.subplots(rows, per_row, figsize=(2 * per_row, 2.2 * rows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for i in range(n_real):
        axes[0, i].imshow(real.pixels[i], cmap="gray", vmin=0.0, vmax=1.0)
        axes[0, i].set_title(f"real {i}", fontsize=8)
    if n_gen:
        for i in range(n_gen):
            axes[rows - 1, i].imshow(generated.pixels[i], cmap="gray", vmin=0.0, vmax=1.0)
            axes[rows - 1, i].set_title(f"generated {i}", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_dual_histograms(real_duals: np.ndarray, gen_duals: np.ndarray, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    bins = 40
    ax.hist(real_duals, bins=bins, alpha=0.6, label="real", color="tab:blue", density=True)
    if gen_duals.size:
        ax.hist(gen_duals, bins=bins, alpha=0.6, label="generated", color="tab:orange", density=True)
    ax.set_xlabel("dual coordinate")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

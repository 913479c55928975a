"""PNG figures for the CLI's ``--plot`` option (file output only, no display)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_loss(epochs: Sequence[Mapping], path) -> Path:
    xs = [e["epoch"] for e in epochs]
    ys = [e["loss"] for e in epochs]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_metrics(reports: Mapping[int, Mapping], path) -> Path:
    """Grouped bars of hit rate / precision / recall / f1 for each K."""
    names = ("hit_rate", "precision", "recall", "f1")
    ks = sorted(reports)
    width = 0.8 / max(len(ks), 1)
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 3.2))
    for j, k in enumerate(ks):
        ax.bar(x + j * width, [reports[k][n] for n in names], width, label=f"K={k}")
    ax.set_xticks(x + width * (len(ks) - 1) / 2)
    ax.set_xticklabels(names)
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)


def plot_attention(weights: np.ndarray, labels: Sequence[str], path, title: str = "") -> Path:
    """One heatmap per head; ``weights`` is (heads, T, T)."""
    weights = np.asarray(weights)
    h = weights.shape[0]
    fig, axes = plt.subplots(1, h, figsize=(2.6 * h + 0.6, 2.8), squeeze=False)
    for k, ax in enumerate(axes[0]):
        ax.imshow(weights[k], vmin=0.0, vmax=1.0, cmap="viridis")
        ax.set_title(f"head {k}")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=90, fontsize=6)
        ax.set_yticks(range(len(labels)))
        ax.set_yticklabels(labels, fontsize=6)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return Path(path)

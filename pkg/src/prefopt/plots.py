"""Figure rendering for experiment outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_regret_curves(traces_by_label: Mapping[str, Sequence], path) -> Path:
    """Mean immediate regret per iteration with standard-error bands, one line per label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, traces in traces_by_label.items():
        curves = np.stack([trace.regrets for trace in traces])
        iters = np.arange(curves.shape[1])
        mean = curves.mean(axis=0)
        if curves.shape[0] > 1:
            se = curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0])
            ax.fill_between(iters, mean - se, mean + se, alpha=0.25)
        ax.plot(iters, mean, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel("immediate regret")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_score_grid(scores: np.ndarray, path, bounds=None) -> Path:
    """Heatmap of pairwise query scores over the pool (1-D domains)."""
    fig, ax = plt.subplots(figsize=(5, 4))
    extent = None
    if bounds is not None:
        lo, hi = float(bounds[0][0]), float(bounds[0][1])
        extent = (lo, hi, lo, hi)
    im = ax.imshow(scores, origin="lower", extent=extent, aspect="auto", cmap="viridis")
    fig.colorbar(im, ax=ax, label="information gain (nats)")
    ax.set_xlabel("first query point")
    ax.set_ylabel("second query point")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path

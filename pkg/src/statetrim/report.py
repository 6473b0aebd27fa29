"""Figure rendering for evaluation and sweep reports.

The delimited outputs (CSV, JSON) are the machine contract; these figures
are the human-facing companions written next to them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .deepssm import DeepSsm
from .training import lru_hankel_sigma


def save_spectra_figure(model: DeepSsm, path) -> None:
    """Per-layer eigenvalue moduli (top) and normalized Hankel singular
    values (bottom), each sorted non-increasing."""
    n = len(model.layers)
    fig, axes = plt.subplots(2, n, figsize=(3.2 * n, 5.4), squeeze=False)
    for i, layer in enumerate(model.layers):
        mods = np.sort(np.abs(layer.lru.eigenvalues()))[::-1]
        sigma = lru_hankel_sigma(layer.lru)
        top, bottom = axes[0][i], axes[1][i]
        top.stem(np.arange(1, mods.size + 1), mods)
        top.set_ylim(0.0, 1.05)
        top.set_title(f"layer {i + 1}")
        top.set_ylabel("|eigenvalue|" if i == 0 else "")
        if sigma.size and sigma[0] > 0:
            bottom.semilogy(np.arange(1, sigma.size + 1),
                            np.maximum(sigma / sigma[0], 1e-16), "o-")
        bottom.set_xlabel("state index")
        bottom.set_ylabel("sigma / sigma_1" if i == 0 else "")
        bottom.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)


def save_sweep_figure(rows: list[dict], path) -> None:
    """Average test fit versus number of removed states, one curve per method."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    methods = sorted({row["method"] for row in rows})
    for method in methods:
        pts = sorted((r["removed"], r["average_fit"]) for r in rows
                     if r["method"] == method)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", label=method.upper())
    ax.set_xlabel("removed states per layer")
    ax.set_ylabel("average fit [%]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(Path(path), dpi=130)
    plt.close(fig)

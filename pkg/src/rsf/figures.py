"""Report figures: loss curves for fits, spread plots for the harness.

Written as PNG next to the CSV/JSON they illustrate.  Uses the Agg
backend so report generation works headless; files land via the same
tmp-and-rename path as every other output.
"""

from __future__ import annotations

import io
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import HarnessResult
from .imageio import write_bytes_atomic


def _save(fig, path: str | os.PathLike) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=120)
    plt.close(fig)
    write_bytes_atomic(buf.getvalue(), path)


def save_loss_curve(history: list[float], path: str | os.PathLike) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(np.arange(len(history)), history, lw=1.2)
    positive = [v for v in history if v > 0]
    if positive:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title("fit loss")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def save_harness_figure(result: HarnessResult, path: str | os.PathLike) -> None:
    """Per-run PSNR spread: parallel refits vs sequential orders."""
    par = result.parallel_psnr_matrix().mean(axis=0)
    seq = result.sequential_psnr_matrix().mean(axis=0)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.8), sharey=True)
    ax1.boxplot([par, seq], tick_labels=["parallel", "sequential"])
    ax1.set_ylabel("PSNR (dB), mean over pairs")
    ax1.set_title("spread across runs")
    ax1.grid(True, alpha=0.3)
    ax2.scatter(np.zeros_like(par), par, label="parallel (seeds)", marker="o")
    ax2.scatter(np.ones_like(seq), seq, label="sequential (orders)", marker="x")
    ax2.set_xticks([0, 1])
    ax2.set_xticklabels(["parallel", "sequential"])
    ax2.set_xlim(-0.5, 1.5)
    ax2.legend(fontsize=8)
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    _save(fig, path)

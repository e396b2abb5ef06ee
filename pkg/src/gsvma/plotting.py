"""Figure output for reports: ROC curves and per-generation GA curves.

SVGs are written with a fixed hash salt and no date metadata so that
re-running a command reproduces the files byte for byte.
"""

from __future__ import annotations

import os
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "svg.hashsalt": "gsvma",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "figure.dpi": 100,
}

GENERATION_PANELS = (
    ("accuracy", "Accuracy"),
    ("auc", "AUC"),
    ("f_measure", "F-measure"),
    ("ppv", "PPV"),
    ("recall", "Recall"),
    ("specificity", "Specificity"),
)


def _save(fig, path: str | os.PathLike) -> None:
    fig.savefig(path, metadata={"Date": None} if str(path).endswith(".svg") else None)
    plt.close(fig)


def plot_roc(curves: Mapping[str, np.ndarray], path, title: str = "ROC") -> None:
    """One line per labelled curve of ``(fpr, tpr)`` points, with AUC in the legend."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], ls="--", lw=0.8, color="0.6")
        for label, pts in curves.items():
            pts = np.asarray(pts)
            area = float(np.sum(np.diff(pts[:, 0]) * (pts[1:, 1] + pts[:-1, 1]) / 2))
            ax.plot(pts[:, 0], pts[:, 1], lw=1.4, label=f"{label} (AUC {area:.3f})")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.01)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(title)
        ax.legend(loc="lower right", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_fitness(records: list[dict], path, title: str = "GA fitness") -> None:
    gens = [r["generation"] for r in records]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(gens, [r["best_fitness"] for r in records], marker="o", ms=3, label="best")
        ax.plot(gens, [r["mean_fitness"] for r in records], marker="s", ms=3, label="mean")
        ax.plot(gens, [r["best_so_far"] for r in records], ls=":", color="k", label="best so far")
        ax.set_xlabel("Generation")
        ax.set_ylabel("CV accuracy")
        ax.set_xticks(gens)
        ax.set_title(title)
        ax.legend(loc="lower right", fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_generation_metrics(records: list[dict], path) -> None:
    """Six panels: each metric of the generation's best mask against generation."""
    gens = [r["generation"] for r in records]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, 3, figsize=(9, 5), sharex=True)
        for ax, (key, label) in zip(axes.flat, GENERATION_PANELS):
            ax.plot(gens, [r["best_metrics"][key] for r in records], marker="o", ms=3)
            ax.set_title(label)
            ax.set_xticks(gens)
        for ax in axes[1]:
            ax.set_xlabel("Generation")
        fig.tight_layout()
        _save(fig, path)

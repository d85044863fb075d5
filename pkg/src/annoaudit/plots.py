"""Figure rendering for the report path; every chart lands next to its CSV.

SVG output with the date stripped from the metadata, so re-running an
experiment reproduces the figure files byte for byte.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audit import AuditCurves
from .evaluation import AucMatrix
from .explain import ImportanceVector

_RC = {
    "figure.figsize": (7.0, 4.2),
    "axes.labelsize": 10,
    "axes.titlesize": 11,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "annoaudit",
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(Path(path), format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def plot_flip_rate(curves_by_name: Mapping[str, AuditCurves], path: str | Path) -> None:
    """Proportion of labels flipped per audit, as a function of audit volume."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, curves in curves_by_name.items():
            k = np.arange(1, curves.n_total + 1)
            ax.plot(k, curves.flip_rate, label=name, linewidth=1.2)
            ax.axhline(curves.random_baseline_rate, linestyle=":", linewidth=0.8, color="gray")
        ax.set_xlabel("audited tasks")
        ax.set_ylabel("flip rate (errors caught per audit)")
        ax.set_title("Model-ranked auditing vs the random baseline (dotted)")
        ax.legend()
        _save(fig, path)


def plot_coverage(curves_by_name: Mapping[str, AuditCurves], path: str | Path) -> None:
    """Proportion of all errors caught, as a function of audit volume."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, curves in curves_by_name.items():
            k = np.arange(1, curves.n_total + 1)
            ax.plot(k / curves.n_total, curves.coverage, label=name, linewidth=1.2)
        ax.plot([0, 1], [0, 1], linestyle="--", color="orange", linewidth=1.0, label="random sampling")
        ax.set_xlabel("fraction of tasks audited")
        ax.set_ylabel("fraction of errors caught")
        ax.set_title("Error coverage by audit volume")
        ax.legend()
        _save(fig, path)


def plot_cumulative_importance(importances: Mapping[str, ImportanceVector], path: str | Path) -> None:
    """Cumulative mean |SHAP| over features ranked by magnitude, one line per model."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        for name, vector in importances.items():
            ranks = np.arange(1, len(vector.cumulative) + 1)
            ax.plot(ranks, vector.cumulative, label=name, linewidth=1.2)
        ax.set_xlabel("feature rank")
        ax.set_ylabel("cumulative mean |SHAP|")
        ax.set_title("Cumulative feature importance")
        ax.legend()
        _save(fig, path)


def plot_auc_matrix(matrix: AucMatrix, path: str | Path) -> None:
    """Generalization heatmap: training source on rows, test set on columns."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.2, 4.4))
        image = ax.imshow(matrix.values, cmap="viridis", vmin=0.5, vmax=1.0)
        ax.set_xticks(range(len(matrix.col_names)), matrix.col_names, rotation=30, ha="right")
        ax.set_yticks(range(len(matrix.row_names)), matrix.row_names)
        for i in range(len(matrix.row_names)):
            for j in range(len(matrix.col_names)):
                ax.text(j, i, f"{matrix.values[i, j]:.3f}", ha="center", va="center",
                        color="white", fontsize=8)
        ax.set_xlabel("test set")
        ax.set_ylabel("training source")
        ax.set_title("Cross-application AUC")
        fig.colorbar(image, ax=ax, shrink=0.85)
        _save(fig, path)

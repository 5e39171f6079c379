"""Figures for the analysis report."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import DensityCurve  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 120,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def plot_densities(
    curves: Sequence[DensityCurve],
    path,
    reference: Optional[str] = None,
    distances: Optional[Dict[str, float]] = None,
    title: str = "Object size distribution",
) -> Path:
    """Overlay density curves; the ``reference`` curve is drawn dashed and the
    legend carries each curve's distance to it when ``distances`` is given."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for curve in curves:
            label = curve.label or "sample"
            if distances and curve.label in distances and curve.label != reference:
                label = f"{label} (W={distances[curve.label]:.2f})"
            ls = "--" if curve.label == reference else "-"
            ax.plot(curve.grid, curve.values, ls, lw=1.5, label=label)
        ax.set_xlabel("box area (% of image)")
        ax.set_ylabel("density")
        ax.set_xlim(left=0)
        ax.set_ylim(bottom=0)
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def plot_iou_histogram(ious: Sequence[float], threshold: float, path) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.hist(list(ious), bins=20, range=(0, 1), color="0.4")
        ax.axvline(threshold, color="C3", lw=1)
        ax.set_xlabel("IoU")
        ax.set_ylabel("count")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path

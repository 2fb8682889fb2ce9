"""Figure rendering for simulation results.

Everything here writes PNG files; no interactive backends. The CLI
calls these next to its delimited outputs so a run leaves both the
numbers and a picture of them.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import AggregateMSE

__all__ = ["save_mse_figure", "save_comparison_figure"]


def _maybe_log(ax, *curves) -> None:
    finite = np.concatenate([np.asarray(c)[np.isfinite(c)] for c in curves])
    positive = finite[finite > 0]
    if positive.size and positive.max() / max(positive.min(), 1e-300) > 1e3:
        ax.set_yscale("log")


def save_mse_figure(agg: AggregateMSE, path, title: str = "") -> str:
    """One panel: user MSE, eavesdropper MSE, and the theory curve."""
    k = np.arange(1, len(agg.user_mse) + 1)
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    ax.plot(k, agg.eav_mse, label="eavesdropper MSE", color="tab:red")
    ax.plot(
        k,
        agg.eav_theory,
        label="eavesdropper theory",
        color="black",
        linestyle="--",
        linewidth=1.0,
    )
    ax.plot(k, agg.user_mse, label="user MSE", color="tab:blue")
    _maybe_log(ax, agg.eav_mse, agg.user_mse)
    ax.set_xlabel("step k")
    ax.set_ylabel("mean squared estimation error")
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def save_comparison_figure(
    curves: dict[str, np.ndarray],
    path,
    title: str = "",
    ylabel: str = "eavesdropper mean squared error",
) -> str:
    """Overlay several named curves, one per method under comparison."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for label, values in curves.items():
        values = np.asarray(values)
        ax.plot(np.arange(1, len(values) + 1), values, label=label)
    _maybe_log(ax, *curves.values())
    ax.set_xlabel("step k")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend(loc="best")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)

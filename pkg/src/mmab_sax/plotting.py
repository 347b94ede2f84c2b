"""Regret-versus-horizon figure written next to a sweep table."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_sweep(summary: Sequence[dict], path: str | Path, title: str | None = None) -> Path:
    """Mean cumulative regret with a one-sd band, log-scaled horizon axis."""
    path = Path(path)
    T = [s["horizon"] for s in summary]
    mean = [s["mean"] for s in summary]
    sd = [s["sd"] for s in summary]
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    ax.plot(T, mean, marker="o", color="tab:blue", label="mean regret")
    ax.fill_between(T, [m - d for m, d in zip(mean, sd)], [m + d for m, d in zip(mean, sd)],
                    color="tab:blue", alpha=0.2, linewidth=0)
    ax.set_xscale("log")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("cumulative regret")
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

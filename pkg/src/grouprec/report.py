"""Figure rendering for CLI reports.

Each plotting helper writes a single PNG next to the delimited artifacts.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_anonymity_curve(reports: Sequence[Mapping], group_size: int, path) -> None:
    """Effective anonymity-set size versus exchange ticks."""
    ts = [r["time"] for r in reports]
    sizes = [r["effective_size"] for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(ts, sizes, lw=1.5)
    ax.axhline(group_size, color="gray", ls="--", lw=1, label=f"group size N={group_size}")
    ax.set_xlabel("exchange ticks")
    ax.set_ylabel("effective anonymity size")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_recall_curves(reports: Sequence, path) -> None:
    """Mean recall@k curves, one line per evaluated method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for report in reports:
        ks = sorted(report.recall)
        ax.plot(ks, [report.recall[k] for k in ks], marker="o", ms=3, label=report.method)
    ax.set_xlabel("k")
    ax.set_ylabel("recall@k")
    ax.set_ylim(bottom=0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_score_distribution(scores, path, title: str = "rank scores") -> None:
    """Sorted rank-score profile for one target (log scale)."""
    ordered = sorted(scores, reverse=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(range(1, len(ordered) + 1), ordered, lw=1)
    ax.set_xlabel("node rank")
    ax.set_ylabel("score")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

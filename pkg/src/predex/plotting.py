"""Report figures. Rendering is headless (Agg) and file-based."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_auroc_bars(rows: list[dict], path: str | Path, title: str) -> None:
    """Grouped AUROC bar chart with std error bars.

    Each row needs: arm, mean, std, biased_eval. Arms evaluated on an
    event-anchored test scheme are hatched and annotated, since that setup
    does not mirror any clinical use case.
    """
    arms = [r["arm"] for r in rows]
    means = [r["mean"] for r in rows]
    stds = [r["std"] for r in rows]
    biased = [bool(r.get("biased_eval")) for r in rows]

    fig, ax = plt.subplots(figsize=(max(4.0, 1.9 * len(rows) + 1.5), 4.2))
    xs = range(len(rows))
    colors = ["#b23a3a" if b else "#3a6ab2" for b in biased]
    bars = ax.bar(xs, means, yerr=stds, capsize=4, color=colors,
                  ecolor="#5b2d8c", error_kw={"elinewidth": 2})
    for bar, is_biased in zip(bars, biased):
        if is_biased:
            bar.set_hatch("//")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(arms, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("AUROC")
    ax.set_ylim(0.0, 1.05)
    ax.axhline(0.5, color="gray", linewidth=0.8, linestyle=":")
    ax.set_title(title)
    if any(biased):
        ax.text(
            0.99, 0.02,
            "hatched = event-anchored evaluation,\nNOT a clinical use case",
            transform=ax.transAxes, ha="right", va="bottom", fontsize=7, color="#b23a3a",
        )
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

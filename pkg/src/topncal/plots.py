"""Matplotlib renderers for the CSV report data.

Each function takes the row dicts emitted by the experiment module and writes
a PNG next to the delimited output.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SERIES_STYLE = {
    "all": dict(color="tab:blue", marker="o", label="all items"),
    "topn": dict(color="tab:red", marker="s", label="top-N items"),
    "outside": dict(color="tab:gray", marker="^", label="outside top-N"),
}


def render_reliability(points, hists, path, label_range=(0.0, 1.0)):
    """Reliability diagram with a prediction-frequency overlay."""
    fig, ax = plt.subplots(figsize=(5, 5))
    lo, hi = label_range
    ax.plot([lo, hi], [lo, hi], ls=":", color="k", lw=1, label="perfect")
    for name, style in _SERIES_STYLE.items():
        rows = [p for p in points if p["series"] == name]
        if rows:
            ax.plot([p["mean_prediction"] for p in rows],
                    [p["mean_label"] for p in rows], ms=4, **style)
    ax2 = ax.twinx()
    for name, color in (("all", "tab:blue"), ("topn", "tab:red")):
        rows = [h for h in hists if h["series"] == name]
        if rows:
            total = sum(h["count"] for h in rows) or 1
            centers = [(h["bin_lo"] + h["bin_hi"]) / 2 for h in rows]
            width = rows[0]["bin_hi"] - rows[0]["bin_lo"]
            ax2.bar(centers, [h["count"] / total for h in rows], width=width * 0.9,
                    color=color, alpha=0.15)
    ax2.set_ylabel("relative frequency")
    ax.set_xlabel("mean predicted value")
    ax.set_ylabel("mean observed feedback")
    ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_rankplot(rank_rows, path):
    """Mean prediction vs mean feedback by rank group."""
    fig, ax = plt.subplots(figsize=(5, 4))
    x = [(r["rank_lo"] + r["rank_hi"]) / 2 for r in rank_rows]
    ax.plot(x, [r["mean_label"] for r in rank_rows], marker="o", ms=4,
            label="actual", color="tab:blue")
    ax.plot(x, [r["mean_prediction"] for r in rank_rows], marker="s", ms=4,
            label="predicted", color="tab:orange")
    if x and max(x) / max(min(x), 1) > 20:
        ax.set_xscale("log")
    ax.set_xlabel("rank position")
    ax.set_ylabel("mean value")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_heatmap(cells, metric, path):
    """Sensitivity grid: alpha (rows) x number of groups (columns)."""
    rows = [c for c in cells if c["metric"] == metric]
    alphas = sorted({c["alpha"] for c in rows})
    groups = sorted({c["n_groups"] for c in rows})
    grid = np.full((len(alphas), len(groups)), np.nan)
    for c in rows:
        grid[alphas.index(c["alpha"]), groups.index(c["n_groups"])] = c["value"]
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(grid, aspect="auto", origin="lower", cmap="viridis")
    ax.set_xticks(range(len(groups)), [str(g) for g in groups])
    ax.set_yticks(range(len(alphas)), [str(a) for a in alphas])
    ax.set_xlabel("number of rank groups")
    ax.set_ylabel("discounting factor")
    ax.set_title(metric)
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_sweep(summary_rows, metric, path):
    """Metric vs N per (strategy, calibrator) combination."""
    fig, ax = plt.subplots(figsize=(5, 4))
    combos = sorted({(r["strategy"], r["calibrator"]) for r in summary_rows
                     if r["metric"] == metric})
    for strategy, calibrator in combos:
        rows = sorted((r for r in summary_rows
                       if r["metric"] == metric and r["strategy"] == strategy
                       and r["calibrator"] == calibrator), key=lambda r: r["n"])
        if rows:
            ax.errorbar([r["n"] for r in rows], [r["mean"] for r in rows],
                        yerr=[r["std"] for r in rows], marker="o", ms=4,
                        capsize=2, label=f"{strategy}/{calibrator}")
    ax.set_xlabel("number of recommendations N")
    ax.set_ylabel(metric)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

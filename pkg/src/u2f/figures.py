"""Figure rendering for evaluation and robustness reports.

Everything renders through the Agg backend straight to PNG files; no
display is ever needed. Each renderer returns the paths it wrote.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .evaluation import ReportTable  # noqa: E402


def _bar_with_err(ax, positions, means, stds, width, label):
    safe_means = [m if m is not None else 0.0 for m in means]
    safe_stds = [s if s is not None else 0.0 for s in stds]
    ax.bar(positions, safe_means, width, yerr=safe_stds, capsize=3, label=label)


def render_eval_figures(table: ReportTable, out_dir: str) -> list[str]:
    """Write the three evaluation charts; returns the file paths."""
    os.makedirs(out_dir, exist_ok=True)
    modes = [row.mode for row in table.rows]
    x = np.arange(len(modes))
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4))
    _bar_with_err(
        ax,
        x - 0.2,
        [r.novelty_human_mean for r in table.rows],
        [r.novelty_human_std for r in table.rows],
        0.4,
        "novelty (human)",
    )
    _bar_with_err(
        ax,
        x + 0.2,
        [r.feasibility_human_mean for r in table.rows],
        [r.feasibility_human_std for r in table.rows],
        0.4,
        "feasibility (human)",
    )
    ax.set_xticks(x, modes)
    ax.set_ylabel("rating (1-5)")
    ax.set_title("Human ratings by mode")
    ax.legend()
    path = os.path.join(out_dir, "ratings_by_mode.png")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    _bar_with_err(
        ax,
        x,
        [r.semantic_novelty_mean for r in table.rows],
        [r.semantic_novelty_std for r in table.rows],
        0.5,
        "semantic novelty",
    )
    ax2 = ax.twinx()
    ax2.plot(x, [r.uus_mean for r in table.rows], "o-", color="black", label="findings per case")
    ax.set_xticks(x, modes)
    ax.set_ylabel("1 - cosine similarity")
    ax2.set_ylabel("accepted findings per case")
    ax.set_title("Semantic novelty and accepted findings")
    path = os.path.join(out_dir, "novelty_semantic.png")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    series = (
        ("approval_expert", "expert"),
        ("approval_human", "human overall"),
        ("approval_llm", "llm judge"),
    )
    width = 0.25
    for i, (attr, label) in enumerate(series):
        values = [getattr(r, attr) for r in table.rows]
        ax.bar(
            x + (i - 1) * width,
            [v if v is not None else 0.0 for v in values],
            width,
            label=label,
        )
    ax.set_xticks(x, modes)
    ax.set_ylim(0, 1)
    ax.set_ylabel("approval rate")
    ax.set_title("Finding approval rates")
    ax.legend()
    path = os.path.join(out_dir, "approval_rates.png")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    paths.append(path)
    return paths


def render_robustness_figures(rows: list[dict], out_dir: str) -> list[str]:
    """Write the degradation charts from robustness report rows."""
    os.makedirs(out_dir, exist_ok=True)
    ratios = [row["ratio"] for row in rows]
    paths = []

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ratios, [row["failure_rate"] for row in rows], "o-", label="failure rate (%)")
    retention = [row.get("novelty_retention") for row in rows]
    if any(v is not None for v in retention):
        ax.plot(
            ratios,
            [v if v is not None else float("nan") for v in retention],
            "s--",
            label="novelty retention (%)",
        )
    ax.set_xlabel("degradation ratio")
    ax.set_ylabel("percent")
    ax.set_title("Failure rate and novelty retention under degradation")
    ax.legend()
    path = os.path.join(out_dir, "degradation.png")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    paths.append(path)

    coherence = [row.get("logical_coherence") for row in rows]
    relevance = [row.get("relevance") for row in rows]
    if any(v is not None for v in coherence + relevance):
        fig, ax = plt.subplots(figsize=(7, 4))
        ax.plot(
            ratios,
            [v if v is not None else float("nan") for v in coherence],
            "o-",
            label="logical coherence",
        )
        ax.plot(
            ratios,
            [v if v is not None else float("nan") for v in relevance],
            "s--",
            label="relevance",
        )
        ax.set_xlabel("degradation ratio")
        ax.set_ylabel("rating (1-5)")
        ax.set_title("Imported quality ratings under degradation")
        ax.legend()
        path = os.path.join(out_dir, "degradation_quality.png")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
        paths.append(path)
    return paths

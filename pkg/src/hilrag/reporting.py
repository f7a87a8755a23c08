"""Figure rendering for evaluation reports and training runs.

Figures are written next to the delimited report output; matplotlib runs
headless (Agg backend).
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def render_comparison_figure(reports, path):
    """Horizontal bar chart of labeled accuracy reports, best on top."""
    rows = sorted(reports, key=lambda r: (r.accuracy_pct, r.label))
    labels = [r.label for r in rows]
    values = [r.accuracy_pct for r in rows]
    fig, ax = plt.subplots(figsize=(7, 0.6 * len(rows) + 1.5))
    bars = ax.barh(labels, values, color="#4878a8")
    ax.bar_label(bars, fmt="%.2f", padding=3)
    ax.set_xlabel("accuracy (%)")
    ax.set_xlim(0, max(values) * 1.15 if values else 1)
    ax.set_title("Top-1 / triplet accuracy comparison")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
    return Path(path)


def render_training_figure(history, path):
    """Loss curve (and benchmark accuracy, when tracked) per epoch."""
    epochs = range(1, len(history.epoch_loss) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, history.epoch_loss, marker="o", color="#a84848",
            label="mean loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    if history.epoch_accuracy:
        ax2 = ax.twinx()
        ax2.plot(epochs, history.epoch_accuracy, marker="s", color="#48a860",
                 label="triplet accuracy")
        ax2.set_ylabel("triplet accuracy")
        ax2.set_ylim(0, 1.05)
    ax.set_title("Adapter training")
    fig.tight_layout()
    fig.savefig(Path(path), dpi=120)
    plt.close(fig)
    return Path(path)

"""Report rendering: delimited score tables plus matplotlib figures on disk."""

from __future__ import annotations

import csv
import os
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import TruthClass
from .scoring import Metrics

SCORES_CSV = "scores.csv"
SCATTER_PNG = "score_scatter.png"
RESIDUALS_PNG = "residual_hist.png"
CONFUSION_PNG = "confusion_matrix.png"
CURVES_CSV = "validation_curves.csv"
CURVES_PNG = "validation_curves.png"


def write_evaluation_report(
    directory,
    rows: Sequence[dict],
    metrics: Metrics,
) -> list[str]:
    """Write per-id scores as CSV and render evaluation figures next to it.

    Each row needs: id, predicted_score, true_score, predicted_class,
    true_class.  Returns the paths written.
    """
    os.makedirs(directory, exist_ok=True)
    written = []

    csv_path = os.path.join(directory, SCORES_CSV)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["id", "predicted_score", "true_score", "predicted_class", "true_class", "squared_error"],
        )
        writer.writeheader()
        for row in rows:
            err = (row["predicted_score"] - row["true_score"]) ** 2
            writer.writerow(
                {
                    "id": row["id"],
                    "predicted_score": row["predicted_score"],
                    "true_score": row["true_score"],
                    "predicted_class": row["predicted_class"].value,
                    "true_class": row["true_class"].value,
                    "squared_error": err,
                }
            )
    written.append(csv_path)

    predicted = np.array([row["predicted_score"] for row in rows])
    actual = np.array([row["true_score"] for row in rows])

    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(actual, predicted, s=8, alpha=0.4)
    ax.plot([0, 1], [0, 1], color="grey", linewidth=1, linestyle="--")
    ax.set_xlabel("true score")
    ax.set_ylabel("predicted score")
    ax.set_title(f"predicted vs true (mse={metrics.mse:.4f})")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    fig.tight_layout()
    path = os.path.join(directory, SCATTER_PNG)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.hist(predicted - actual, bins=40, color="steelblue")
    ax.set_xlabel("prediction error")
    ax.set_ylabel("count")
    ax.set_title("residuals")
    fig.tight_layout()
    path = os.path.join(directory, RESIDUALS_PNG)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    counts = np.array([[metrics.tp, metrics.fn], [metrics.fp, metrics.tn]])
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.imshow(counts, cmap="Blues")
    labels = [TruthClass.CLICKBAIT.value, TruthClass.NO_CLICKBAIT.value]
    ax.set_xticks([0, 1], [f"pred {l}" for l in labels])
    ax.set_yticks([0, 1], [f"true {l}" for l in labels])
    for i in range(2):
        for j in range(2):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center")
    ax.set_title(f"accuracy={metrics.accuracy:.3f}  f1={metrics.f1:.3f}")
    fig.tight_layout()
    path = os.path.join(directory, CONFUSION_PNG)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def write_training_report(directory, members_info: Sequence[dict]) -> list[str]:
    """Validation-MSE curves per ensemble member, as CSV and one figure.

    Each entry needs: fold, best_epoch, validation_mse, val_curve.
    """
    os.makedirs(directory, exist_ok=True)
    written = []

    csv_path = os.path.join(directory, CURVES_CSV)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["member", "epoch", "validation_mse"])
        for info in members_info:
            for epoch, value in enumerate(info["val_curve"], 1):
                writer.writerow([info["fold"], epoch, value])
    written.append(csv_path)

    fig, ax = plt.subplots(figsize=(6, 4))
    for info in members_info:
        curve = info["val_curve"]
        epochs = np.arange(1, len(curve) + 1)
        (line,) = ax.plot(epochs, curve, label=f"member {info['fold']}")
        ax.plot(
            info["best_epoch"],
            info["validation_mse"],
            marker="o",
            color=line.get_color(),
            markersize=5,
        )
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation mse")
    ax.set_title("epoch selection per member")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(directory, CURVES_PNG)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written

"""Matplotlib figure rendering for previews and evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .imaging import GrayMask, RgbImage
from .metrics import Curve


def render_preview_figure(path: str | Path, sharp: RgbImage, blurred: RgbImage,
                          gt_mask: GrayMask, gt_intensity: GrayMask) -> None:
    """Side-by-side panel: sharp, blurred composite, GT mask, GT intensity."""
    fig, axes = plt.subplots(1, 4, figsize=(14, 4))
    panels = [(sharp.data, "sharp", None), (blurred.data, "blurred composite", None),
              (gt_mask.data, "gt mask", "gray"), (gt_intensity.data, "gt intensity", "magma")]
    for ax, (data, title, cmap) in zip(axes, panels):
        if cmap is None:
            ax.imshow(data)
        else:
            ax.imshow(data, cmap=cmap, vmin=0.0, vmax=1.0)
        ax.set_title(title)
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_pr_curve(path: str | Path, curve: Curve) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    order = np.argsort([p.x for p in curve.points])
    xs = np.array([p.x for p in curve.points])[order]
    ys = np.array([p.y for p in curve.points])[order]
    ax.plot(xs, ys, marker=".", lw=1.2)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"precision-recall (AUC = {curve.auc:.4f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_roc_curve(path: str | Path, scores: np.ndarray, labels: np.ndarray,
                     auc: float) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    order = np.argsort(-scores, kind="mergesort")
    tps = np.cumsum(labels[order])
    fps = np.cumsum(~labels[order])
    tpr = np.concatenate([[0.0], tps / max(int(labels.sum()), 1)])
    fpr = np.concatenate([[0.0], fps / max(int((~labels).sum()), 1)])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(fpr, tpr, lw=1.5)
    ax.plot([0, 1], [0, 1], ls="--", c="gray", lw=0.8)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC (AUC = {auc:.4f})")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

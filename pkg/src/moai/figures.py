"""Matplotlib report figures for the evaluation path."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_image_comparison(pred, gt, path) -> None:
    """Side-by-side prediction/ground-truth panels with an error heatmap."""
    err = np.abs(np.asarray(pred, float) - np.asarray(gt, float)).mean(axis=-1)
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    axes[0].imshow(np.clip(pred, 0, 1))
    axes[0].set_title("prediction")
    axes[1].imshow(np.clip(gt, 0, 1))
    axes[1].set_title("ground truth")
    im = axes[2].imshow(err, cmap="inferno")
    axes[2].set_title("mean abs error")
    fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_depth_comparison(pred, gt, mask, path) -> None:
    """Depth panels plus masked relative-error heatmap."""
    pred = np.asarray(pred, float)
    gt = np.asarray(gt, float)
    mask = np.asarray(mask) == 1
    rel = np.zeros_like(gt)
    rel[mask] = np.abs(pred[mask] - gt[mask]) / gt[mask]
    fig, axes = plt.subplots(1, 3, figsize=(12, 4))
    vmax = gt[mask].max() if mask.any() else 1.0
    axes[0].imshow(np.where(mask, pred, np.nan), cmap="viridis", vmin=0, vmax=vmax)
    axes[0].set_title("predicted depth")
    axes[1].imshow(np.where(mask, gt, np.nan), cmap="viridis", vmin=0, vmax=vmax)
    axes[1].set_title("ground-truth depth")
    im = axes[2].imshow(np.where(mask, rel, np.nan), cmap="inferno")
    axes[2].set_title("abs rel error")
    fig.colorbar(im, ax=axes[2], fraction=0.046)
    for ax in axes:
        ax.set_axis_off()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)

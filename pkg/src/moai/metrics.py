"""Image metrics (PSNR, SSIM) and masked geometry metrics (Abs.Rel,
delta-threshold), plus the recon/inpaint mask split.

Depth metrics are computed without any scale-and-shift alignment: predicted
geometry is expected to live in the reference frame already.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


@dataclass
class DepthPair:
    predicted: np.ndarray
    groundtruth: np.ndarray
    eval_mask: np.ndarray

    def __post_init__(self):
        self.predicted = np.asarray(self.predicted, dtype=np.float64)
        self.groundtruth = np.asarray(self.groundtruth, dtype=np.float64)
        self.eval_mask = np.asarray(self.eval_mask, dtype=np.uint8)
        if not (
            self.predicted.shape == self.groundtruth.shape == self.eval_mask.shape
        ):
            raise ValueError("depth pair shapes disagree")
        sel = self.eval_mask == 1
        if np.any(self.predicted[sel] <= 0) or np.any(self.groundtruth[sel] <= 0):
            raise ValueError("depths must be positive wherever evaluated")


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 log10(1 / MSE) with unit peak; identical images return +inf."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes disagree")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size) - half
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def _local_mean(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    return fftconvolve(img, kernel, mode="valid")


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean local SSIM over 11x11 Gaussian windows (sigma 1.5), averaged
    over channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("image shapes disagree")
    if a.ndim == 2:
        a = a[..., None]
        b = b[..., None]
    if min(a.shape[0], a.shape[1]) < SSIM_WINDOW:
        raise ValueError("image smaller than the SSIM window")
    kernel = _gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA)
    scores = []
    for c in range(a.shape[2]):
        x, y = a[..., c], b[..., c]
        mu_x = _local_mean(x, kernel)
        mu_y = _local_mean(y, kernel)
        var_x = _local_mean(x * x, kernel) - mu_x**2
        var_y = _local_mean(y * y, kernel) - mu_y**2
        cov = _local_mean(x * y, kernel) - mu_x * mu_y
        num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
        den = (mu_x**2 + mu_y**2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))


def depth_metrics(pair: DepthPair) -> tuple[float, float]:
    """(abs_rel, delta_1.25) over the eval mask; the delta boundary is
    inclusive."""
    sel = pair.eval_mask == 1
    if not sel.any():
        raise ValueError("eval mask is empty")
    pred = pair.predicted[sel]
    gt = pair.groundtruth[sel]
    abs_rel = float(np.mean(np.abs(pred - gt) / gt))
    ratio = np.maximum(pred / gt, gt / pred)
    delta = float(np.mean(ratio <= 1.25))
    return abs_rel, delta


def split_masks(projection_mask: np.ndarray, eval_mask: np.ndarray):
    """recon = eval AND projection; inpaint = eval AND NOT projection."""
    projection_mask = np.asarray(projection_mask, dtype=np.uint8)
    eval_mask = np.asarray(eval_mask, dtype=np.uint8)
    if projection_mask.shape != eval_mask.shape:
        raise ValueError("mask shapes disagree")
    recon = ((eval_mask == 1) & (projection_mask == 1)).astype(np.uint8)
    inpaint = ((eval_mask == 1) & (projection_mask == 0)).astype(np.uint8)
    return recon, inpaint

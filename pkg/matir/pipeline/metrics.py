"""
PSNR and SSIM on 8-bit images.

Y channel: full-range BT.601, Y = 0.299 R + 0.587 G + 0.114 B.
SSIM: 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, L = 255,
averaged over valid window positions.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate2d

from matir.errors import ContractError, DimensionError
from matir.pipeline.images import ImagePlane

logger = logging.getLogger(__name__)

PSNR_CAP = 100.0
_MSE_FLOOR = 1e-10
Y_WEIGHTS = np.array([0.299, 0.587, 0.114])
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PIXEL_MAX = 255.0


@dataclass(frozen=True)
class Metrics:
    psnr: float
    ssim: float


def _check_pair(a: ImagePlane, b: ImagePlane) -> None:
    if a.pixels.shape != b.pixels.shape:
        raise DimensionError(f"image shapes differ: {a.pixels.shape} vs {b.pixels.shape}")


def luminance(img: ImagePlane) -> np.ndarray:
    """Y plane [H x W] in 8-bit units; single-channel images pass through."""
    pixels = img.pixels.astype(np.float64)
    if img.channels == 1:
        return pixels[:, :, 0]
    return pixels @ Y_WEIGHTS


def psnr(a: ImagePlane, b: ImagePlane, y_channel_only: bool = True) -> float:
    """10 log10(255^2 / MSE) in dB; 100.0 when the images match."""
    _check_pair(a, b)
    if y_channel_only:
        diff = luminance(a) - luminance(b)
    else:
        diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse < _MSE_FLOOR:
        return PSNR_CAP
    return 10.0 * math.log10(PIXEL_MAX * PIXEL_MAX / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    y, x = np.ogrid[-half:half + 1, -half:half + 1]
    window = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    return window / window.sum()


def ssim_planes(x: np.ndarray, y: np.ndarray) -> float:
    """SSIM of two [H x W] planes in 8-bit units."""
    if x.shape[0] < SSIM_WINDOW or x.shape[1] < SSIM_WINDOW:
        raise ContractError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {x.shape[0]}x{x.shape[1]}")
    window = gaussian_window()
    c1 = (SSIM_K1 * PIXEL_MAX) ** 2
    c2 = (SSIM_K2 * PIXEL_MAX) ** 2

    def filt(plane):
        return correlate2d(plane, window, mode="valid")

    mu_x = filt(x)
    mu_y = filt(y)
    # Products written symmetrically so swapping x and y is bit-exact.
    mu_xy = mu_x * mu_y
    mu_sq = mu_x * mu_x + mu_y * mu_y
    var_sum = (filt(x * x) - mu_x * mu_x) + (filt(y * y) - mu_y * mu_y)
    cov = filt(x * y) - mu_xy
    ssim_map = ((2.0 * mu_xy + c1) * (2.0 * cov + c2)) / ((mu_sq + c1) * (var_sum + c2))
    return float(np.mean(ssim_map))


def ssim(a: ImagePlane, b: ImagePlane) -> float:
    """SSIM on the Y channel."""
    _check_pair(a, b)
    return ssim_planes(luminance(a), luminance(b))


def measure(restored: ImagePlane, reference: ImagePlane) -> Metrics:
    return Metrics(psnr=psnr(restored, reference), ssim=ssim(restored, reference))

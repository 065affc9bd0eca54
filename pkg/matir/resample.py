"""
Separable bicubic resampling (a = -0.5) expressed as dense resize matrices.

Downscaling widens the kernel by 1/scale (anti-aliasing). Border taps clamp to
the edge pixel and each row of weights is normalised to sum to 1, so constant
images stay constant.
"""
import logging
import math
from functools import lru_cache

import numpy as np

from matir.errors import ContractError
from matir.tensor import ops
from matir.tensor.core import Tensor

logger = logging.getLogger(__name__)

CUBIC_A = -0.5


def cubic(x: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Keys cubic convolution kernel."""
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    near = (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    far = a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    return np.where(ax <= 1.0, near, np.where(ax < 2.0, far, 0.0))


@lru_cache(maxsize=64)
def _resize_matrix(in_size: int, out_size: int, antialias: bool) -> np.ndarray:
    scale = out_size / in_size
    shrink = antialias and scale < 1.0
    width = 4.0 / scale if shrink else 4.0
    centers = (np.arange(out_size) + 0.5) / scale - 0.5
    taps = int(math.ceil(width)) + 2
    left = np.floor(centers - width / 2.0).astype(np.int64)
    idx = left[:, None] + np.arange(taps)[None, :]
    dist = centers[:, None] - idx
    weights = scale * cubic(scale * dist) if shrink else cubic(dist)
    matrix = np.zeros((out_size, in_size))
    clamped = np.clip(idx, 0, in_size - 1)
    for row in range(out_size):
        np.add.at(matrix[row], clamped[row], weights[row])
    matrix /= matrix.sum(axis=1, keepdims=True)
    matrix.setflags(write=False)
    return matrix


def resize_matrix(in_size: int, out_size: int, antialias: bool = True) -> np.ndarray:
    """[out x in] matrix M such that M @ signal resamples a 1D signal."""
    if in_size < 1 or out_size < 1:
        raise ContractError(f"resize sizes must be positive, got {in_size} -> {out_size}")
    return _resize_matrix(in_size, out_size, antialias)


def resize_array(planes: np.ndarray, out_height: int, out_width: int) -> np.ndarray:
    """Resample [C x H x W] float planes."""
    _, height, width = planes.shape
    m_h = resize_matrix(height, out_height)
    m_w = resize_matrix(width, out_width)
    return np.einsum("oh,chw,pw->cop", m_h, planes, m_w)


def upsample_tensor(x: Tensor, scale: int) -> Tensor:
    """Differentiable bicubic upsampling of [C x H x W] by an integer scale."""
    _, height, width = x.shape
    m_h = resize_matrix(height, height * scale)
    m_w = resize_matrix(width, width * scale)
    return ops.matmul(ops.matmul(m_h, x), m_w.T)

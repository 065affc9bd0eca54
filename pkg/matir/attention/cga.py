"""
Channel global attention.

    z     = spatial mean of X                       (C)
    Q,K,V = W_q z, W_k z, W_v z                     (C each)
    A     = softmax(Q K^T / sqrt(C))                (C x C, rows sum to 1)
    out   = (A V) * X                               per pixel, elementwise
"""
import logging
import math

import numpy as np

from matir.errors import DimensionError
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import Module, parameter, trunc_normal

logger = logging.getLogger(__name__)


class CgaBlock(Module):
    """Square W_q, W_k, W_v acting on the pooled channel descriptor."""

    def __init__(self, rng: np.random.Generator, channels: int):
        self.channels = channels
        self.w_q = parameter(trunc_normal(rng, (channels, channels)))
        self.w_k = parameter(trunc_normal(rng, (channels, channels)))
        self.w_v = parameter(trunc_normal(rng, (channels, channels)))

    def attention(self, x: Tensor) -> Tensor:
        """Channel attention matrix A [C x C]."""
        z = self.pooled(x)
        q = ops.matmul(self.w_q, z)
        k = ops.matmul(self.w_k, z)
        logits = ops.mul(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(self.channels))
        return ops.softmax(logits, axis=-1)

    def pooled(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[0] != self.channels:
            raise DimensionError(f"CgaBlock expects [{self.channels} x H x W], got {x.shape}")
        return ops.reshape(ops.mean(x, axis=(1, 2)), (self.channels, 1))

    def forward(self, x: Tensor) -> Tensor:
        z = self.pooled(x)
        v = ops.matmul(self.w_v, z)
        z_out = ops.matmul(self.attention(x), v)
        return ops.mul(x, ops.reshape(z_out, (self.channels, 1, 1)))

    def macs(self, height: int, width: int) -> int:
        c = self.channels
        return c * height * width + 3 * c * c + 2 * c * c + c * height * width


def cga_forward(block: CgaBlock, x: Tensor) -> Tensor:
    return block(x)

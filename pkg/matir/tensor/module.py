"""
Parameter containers and the basic layers every MatIR block is built from.

Parameters are discovered by walking attributes in insertion order, so the
census and checkpoint layout are deterministic for a given construction order.
"""
import logging
import math
from collections import OrderedDict
from typing import Iterator, Optional, Tuple

import numpy as np
from scipy.stats import truncnorm

from matir.tensor import ops
from matir.tensor.core import Tensor

logger = logging.getLogger(__name__)

PROJECTION_STD = 0.02


def trunc_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float = PROJECTION_STD) -> np.ndarray:
    """Normal(0, std) truncated at two standard deviations."""
    return truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng)


def parameter(data: np.ndarray, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Base class: attributes that are Tensors with requires_grad are parameters."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.zero_grad()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__}.forward not implemented")


class Linear(Module):
    """Token-wise affine map: x [N x in] @ weight [in x out] + bias."""

    def __init__(self, rng: np.random.Generator, in_features: int, out_features: int, bias: bool = True):
        self.in_features = in_features
        self.out_features = out_features
        self.weight = parameter(trunc_normal(rng, (in_features, out_features)))
        self.bias = parameter(np.zeros(out_features)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y

    def zero_(self) -> None:
        self.weight.data[...] = 0.0
        if self.bias is not None:
            self.bias.data[...] = 0.0

    def macs(self, tokens: int) -> int:
        return tokens * self.in_features * self.out_features


class LayerNorm(Module):
    """Normalises the last axis; gamma=1, beta=0 at init."""

    def __init__(self, features: int, eps: float = 1e-5):
        self.eps = eps
        self.gamma = parameter(np.ones(features))
        self.beta = parameter(np.zeros(features))

    def forward(self, x: Tensor) -> Tensor:
        mu = ops.mean(x, axis=-1, keepdims=True)
        centered = ops.sub(x, mu)
        var = ops.mean(ops.mul(centered, centered), axis=-1, keepdims=True)
        x_hat = ops.mul(centered, ops.power(ops.add(var, self.eps), -0.5))
        return ops.add(ops.mul(x_hat, self.gamma), self.beta)


class Conv2d(Module):
    """Same-padded convolution on [C x H x W] maps."""

    def __init__(self, rng: np.random.Generator, in_channels: int, out_channels: int, kernel_size: int = 3):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = parameter(
            trunc_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), std=1.0 / math.sqrt(fan_in))
        )
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias)

    def zero_(self) -> None:
        self.weight.data[...] = 0.0
        self.bias.data[...] = 0.0

    def macs(self, height: int, width: int) -> int:
        return self.in_channels * self.out_channels * self.kernel_size ** 2 * height * width


class DepthwiseConv2d(Module):
    """Same-padded per-channel convolution."""

    def __init__(self, rng: np.random.Generator, channels: int, kernel_size: int = 3):
        self.channels = channels
        self.kernel_size = kernel_size
        self.weight = parameter(
            trunc_normal(rng, (channels, 1, kernel_size, kernel_size), std=1.0 / kernel_size)
        )
        self.bias = parameter(np.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return ops.depthwise_conv2d(x, self.weight, self.bias)

    def macs(self, height: int, width: int) -> int:
        return self.channels * self.kernel_size ** 2 * height * width


class Mlp(Module):
    """Two linear layers with a GELU between them."""

    def __init__(self, rng: np.random.Generator, in_features: int, hidden: int, out_features: int):
        self.fc1 = Linear(rng, in_features, hidden)
        self.fc2 = Linear(rng, hidden, out_features)

    def forward(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))

    def macs(self, tokens: int) -> int:
        return self.fc1.macs(tokens) + self.fc2.macs(tokens)


def to_tokens(x: Tensor) -> Tensor:
    """[C x H x W] -> [H*W x C], row-major pixel order."""
    channels = x.shape[0]
    return ops.transpose(ops.reshape(x, (channels, -1)), (1, 0))


def to_map(tokens: Tensor, height: int, width: int) -> Tensor:
    """[H*W x C] -> [C x H x W]."""
    channels = tokens.shape[1]
    return ops.reshape(ops.transpose(tokens, (1, 0)), (channels, height, width))

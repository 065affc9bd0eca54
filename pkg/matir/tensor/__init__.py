"""
Minimal dense tensor engine with reverse-mode differentiation.
"""
from matir.tensor.core import Tape, TapeEntry, Tensor, as_tensor, backward, grad_enabled, no_grad
from matir.tensor.gradcheck import check_gradients
from matir.tensor.module import (
    Conv2d,
    DepthwiseConv2d,
    LayerNorm,
    Linear,
    Mlp,
    Module,
    parameter,
    to_map,
    to_tokens,
    trunc_normal,
)
from matir.tensor.serialization import read_tensors, write_tensors

__all__ = [
    "Tape",
    "TapeEntry",
    "Tensor",
    "as_tensor",
    "backward",
    "grad_enabled",
    "no_grad",
    "check_gradients",
    "Conv2d",
    "DepthwiseConv2d",
    "LayerNorm",
    "Linear",
    "Mlp",
    "Module",
    "parameter",
    "to_map",
    "to_tokens",
    "trunc_normal",
    "read_tensors",
    "write_tensors",
]

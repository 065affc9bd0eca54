"""
Differentiable primitives.

Each function computes its forward result with numpy and records a backward
rule on the output. Reductions run in numpy's fixed order, so repeated runs on
the same inputs are bit-identical.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import sparse
from scipy.special import expit

from matir.errors import ContractError, DimensionError
from matir.tensor.core import Tensor, as_tensor, record

logger = logging.getLogger(__name__)

Operand = Union[Tensor, float, int, np.ndarray]
Axis = Optional[Union[int, Tuple[int, ...]]]

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches shape."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return record("add", a.data + b.data, (a, b), _backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return record("sub", a.data - b.data, (a, b), _backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return record("mul", a.data * b.data, (a, b), _backward)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def _backward(g):
        ga = unbroadcast(g / b.data, a.shape)
        gb = unbroadcast(-g * out / b.data, b.shape)
        return ga, gb

    return record("div", out, (a, b), _backward)


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Operand, exponent: float) -> Tensor:
    a = as_tensor(a)

    def _backward(g):
        return (g * exponent * np.power(a.data, exponent - 1.0),)

    return record("power", np.power(a.data, exponent), (a,), _backward)


# ---------------------------------------------------------------------------
# Elementwise functions
# ---------------------------------------------------------------------------

def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def sin(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record("sin", np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def tanh(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return record("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = expit(a.data)
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus_array(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x) without overflow."""
    return np.logaddexp(0.0, x)


def softplus(a: Operand) -> Tensor:
    a = as_tensor(a)
    return record("softplus", softplus_array(a.data), (a,), lambda g: (g * expit(a.data),))


def silu(a: Operand) -> Tensor:
    a = as_tensor(a)
    s = expit(a.data)

    def _backward(g):
        return (g * s * (1.0 + a.data * (1.0 - s)),)

    return record("silu", a.data * s, (a,), _backward)


def gelu(a: Operand) -> Tensor:
    """GELU, tanh approximation."""
    a = as_tensor(a)
    x = a.data
    t = np.tanh(_GELU_C * (x + _GELU_K * x ** 3))

    def _backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * dt),)

    return record("gelu", 0.5 * x * (1.0 + t), (a,), _backward)


def abs(a: Operand) -> Tensor:  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    return record("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


# ---------------------------------------------------------------------------
# Reductions
# ---------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        axes = (axis,) if isinstance(axis, int) else axis
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(a: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)

    def _backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)),)

    return record("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), _backward)


def mean(a: Operand, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.size / max(np.size(out), 1)

    def _backward(g):
        return (np.array(_expand_reduced(g, a.shape, axis, keepdims)) / count,)

    return record("mean", out, (a,), _backward)


# ---------------------------------------------------------------------------
# Shape algebra
# ---------------------------------------------------------------------------

def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise DimensionError(f"cannot reshape {a.shape} into {shape}") from e
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def _is_basic(key) -> bool:
    items = key if isinstance(key, tuple) else (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (slice, int, np.integer)) for k in items)


def index(a: Operand, key) -> Tensor:
    """Basic or fancy indexing; repeated indices accumulate their gradients."""
    a = as_tensor(a)
    basic = _is_basic(key)

    def _backward(g):
        ga = np.zeros_like(a.data)
        if basic:
            ga[key] = g
        else:
            np.add.at(ga, key, g)
        return (ga,)

    return record("index", a.data[key], (a,), _backward)


def scatter_rows(indices: np.ndarray, g: np.ndarray, rows: int) -> np.ndarray:
    """
    Sum the rows of g into `rows` slots, row r of the result collecting every g
    entry whose index is r. g has shape indices.shape + tail.
    """
    flat = indices.reshape(-1)
    tail = g.shape[indices.ndim:]
    values = g.reshape(flat.size, -1)
    if np.unique(flat).size == flat.size:
        out = np.zeros((rows, values.shape[1]))
        out[flat] = values
    else:
        gather = sparse.csr_matrix((np.ones(flat.size), (flat, np.arange(flat.size))), shape=(rows, flat.size))
        out = gather @ values
    return np.asarray(out).reshape((rows,) + tail)


def take(a: Operand, indices: np.ndarray) -> Tensor:
    """Gather rows along axis 0; the result has shape indices.shape + a.shape[1:]."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)

    def _backward(g):
        return (scatter_rows(indices, g, a.shape[0]),)

    return record("take", a.data[indices], (a,), _backward)


def concatenate(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return record("concatenate", np.concatenate([t.data for t in tensors], axis=axis), tensors, _backward)


def pad2d(a: Operand, padding: int) -> Tensor:
    """Zero-pad the last two axes by `padding` on every side."""
    a = as_tensor(a)
    if padding == 0:
        return a
    widths = [(0, 0)] * (a.ndim - 2) + [(padding, padding), (padding, padding)]

    def _backward(g):
        return (g[..., padding:-padding, padding:-padding],)

    return record("pad2d", np.pad(a.data, widths), (a,), _backward)


def flip(a: Operand, axis: int) -> Tensor:
    a = as_tensor(a)
    return record("flip", np.flip(a.data, axis=axis).copy(), (a,), lambda g: (np.flip(g, axis=axis),))


def pixel_shuffle(a: Operand, scale: int) -> Tensor:
    """Depth-to-space: [C*s*s x H x W] -> [C x sH x sW]."""
    a = as_tensor(a)
    channels, height, width = a.shape
    if channels % (scale * scale) != 0:
        raise DimensionError(f"pixel_shuffle: {channels} channels not divisible by {scale}^2")
    out_channels = channels // (scale * scale)
    x = reshape(a, (out_channels, scale, scale, height, width))
    x = transpose(x, (0, 3, 1, 4, 2))
    return reshape(x, (out_channels, height * scale, width * scale))


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Operand, b: Operand) -> Tensor:
    """
    Matrix product over the last two axes (leading axes broadcast).

    Raises:
        DimensionError naming both shapes when inner dimensions disagree
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")

    def _backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return record("matmul", a.data @ b.data, (a, b), _backward)


def softmax(a: Operand, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-subtraction) along axis."""
    a = as_tensor(a)
    if not -a.ndim <= axis < a.ndim:
        raise ContractError(f"softmax axis {axis} invalid for shape {a.shape}")
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return record("softmax", out, (a,), _backward)


# ---------------------------------------------------------------------------
# Convolutions (cross-correlation, no kernel flip)
# ---------------------------------------------------------------------------

def _check_kernel(k: int, padding: Optional[int]) -> int:
    if k % 2 == 0:
        raise ContractError(f"convolution kernel size must be odd, got {k}")
    return (k - 1) // 2 if padding is None else padding


def _patches(xp: np.ndarray, k: int) -> np.ndarray:
    """im2col view of xp [C x H x W]: [C x H-k+1 x W-k+1 x k x k], no copy."""
    return sliding_window_view(xp, (k, k), axis=(1, 2))


def _full_patches(g: np.ndarray, k: int) -> np.ndarray:
    """Patches of g zero-padded by k-1, for the input gradient of a valid correlation."""
    return _patches(np.pad(g, ((0, 0), (k - 1, k - 1), (k - 1, k - 1))), k)


def conv2d(
    x: Operand,
    weight: Operand,
    bias: Optional[Operand] = None,
    padding: Optional[int] = None,
) -> Tensor:
    """
    2D cross-correlation of x [C_in x H x W] with weight [C_out x C_in x k x k].

    padding defaults to (k-1)/2, which keeps H and W unchanged.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    c_out, c_in, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != c_in:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    if kh != kw:
        raise ContractError(f"conv2d expects square kernels, got {kh}x{kw}")
    pad = _check_kernel(kh, padding)
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    patches = _patches(xp, kh)
    out = np.tensordot(weight.data, patches, axes=([1, 2, 3], [0, 3, 4]))
    inputs: List[Tensor] = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[:, None, None]
        inputs.append(bias)

    def _backward(g):
        gw = np.tensordot(g, patches, axes=([1, 2], [1, 2]))
        flipped = weight.data[:, :, ::-1, ::-1]
        gxp = np.tensordot(flipped, _full_patches(g, kh), axes=([0, 2, 3], [0, 3, 4]))
        gx = gxp[:, pad:pad + x.shape[1], pad:pad + x.shape[2]] if pad else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    return record("conv2d", out, inputs, _backward)


def depthwise_conv2d(
    x: Operand,
    weight: Operand,
    bias: Optional[Operand] = None,
    padding: Optional[int] = None,
) -> Tensor:
    """Per-channel cross-correlation of x [C x H x W] with weight [C x 1 x k x k]."""
    x, weight = as_tensor(x), as_tensor(weight)
    channels, _, kh, kw = weight.shape
    if x.ndim != 3 or x.shape[0] != channels:
        raise DimensionError(f"depthwise_conv2d channel mismatch: input {x.shape} vs weight {weight.shape}")
    pad = _check_kernel(kh, padding)
    xp = np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))) if pad else x.data
    patches = _patches(xp, kh)
    kernel = weight.data[:, 0]
    out = np.einsum("chwij,cij->chw", patches, kernel)
    inputs: List[Tensor] = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[:, None, None]
        inputs.append(bias)

    def _backward(g):
        gw = np.einsum("chw,chwij->cij", g, patches)[:, None]
        gxp = np.einsum("chwij,cij->chw", _full_patches(g, kh), kernel[:, ::-1, ::-1])
        gx = gxp[:, pad:pad + x.shape[1], pad:pad + x.shape[2]] if pad else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    return record("depthwise_conv2d", out, inputs, _backward)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def l1_loss(prediction: Tensor, target: Operand) -> Tensor:
    """Mean absolute error."""
    return mean(abs(sub(prediction, target)))

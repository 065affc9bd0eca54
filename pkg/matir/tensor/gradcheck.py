"""
Finite-difference verification of reverse-mode gradients.
Enables: "Does every block's backward rule agree with central differences?"
"""
import logging
import math
from typing import Callable

import numpy as np

from matir.errors import ContractError
from matir.tensor.core import Tensor, backward

logger = logging.getLogger(__name__)

EPS_MIN = 1e-7
EPS_MAX = 1e-3
_FLOOR = 1e-12


def _scalar(out: Tensor) -> float:
    if out.size != 1:
        raise ContractError(f"check_gradients needs a scalar-valued function, got shape {out.shape}")
    return out.item()


def check_gradients(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """
    Compare autodiff and central-difference gradients of a scalar f at x.

    eps is rounded to the nearest power of two and each difference is divided
    by the step actually taken, (x + eps) - (x - eps), so a linear f is
    differentiated exactly.

    Args:
        f: Tensor function returning a scalar tensor
        x: Point of evaluation (its data is not modified)
        eps: Central-difference half step, in [1e-7, 1e-3]

    Returns:
        max over elements of |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-12)

    Raises:
        ContractError if eps is out of range or vanishes against an element of x
    """
    if not EPS_MIN <= eps <= EPS_MAX:
        raise ContractError(f"eps must lie in [{EPS_MIN}, {EPS_MAX}], got {eps}")
    h = 2.0 ** round(math.log2(eps))

    leaf = Tensor(x.data, requires_grad=True)
    out = f(leaf)
    _scalar(out)
    backward(out)
    g_ad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    base = x.data.copy()
    g_fd = np.zeros_like(base)
    flat = base.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        upper, lower = original + h, original - h
        step = upper - lower
        if step == 0.0:
            raise ContractError(f"eps {eps} is below the resolution of x[{i}] = {original}")
        flat[i] = upper
        plus = _scalar(f(Tensor(base)))
        flat[i] = lower
        minus = _scalar(f(Tensor(base)))
        flat[i] = original
        g_fd.reshape(-1)[i] = (plus - minus) / step

    denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), _FLOOR)
    error = float(np.max(np.abs(g_ad - g_fd) / denom)) if g_ad.size else 0.0
    logger.debug(f"check_gradients: {flat.size} elements, max relative error {error:.3e}")
    return error

"""
Triangular window local attention.

For centre i and neighbour j in N(i):
    G_ij  = u . phi(e_ij)
    A_ij  = softmax_j(Q_i K_j^T / sqrt(D) + G_ij)
    G_ijk = softmax_{k in N(j)}(v . psi(e_ij, e_ik, theta_ijk))
    Y_i   = sum_j sum_k G_ijk A_ij V_j

Because G_ijk is normalised over k, sum_k G_ijk = 1 and the triple sum reduces
to sum_j A_ij V_j. psi and v therefore receive zero gradient.
"""
import logging
import math
from typing import Sequence, Union

import numpy as np

from matir.attention.triangle import TriangleGeometry, TriangleWindow
from matir.errors import ContractError, DimensionError
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import Linear, Mlp, Module, parameter, trunc_normal

logger = logging.getLogger(__name__)

Windows = Union[TriangleGeometry, Sequence[TriangleWindow]]


def _geometry(windows: Windows) -> TriangleGeometry:
    if isinstance(windows, TriangleGeometry):
        return windows
    return TriangleGeometry.from_windows(windows)


class TwlaBlock(Module):
    """Q/K/V projections, geometric bias maps phi (2 -> d -> d) and psi (5 -> d -> d)."""

    def __init__(self, rng: np.random.Generator, dim: int, edge_hidden: int = 16, heads: int = 1):
        if dim % heads:
            raise ContractError(f"feature dim {dim} not divisible by {heads} heads")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.qkv = Linear(rng, dim, 3 * dim)
        self.phi = Mlp(rng, 2, edge_hidden, edge_hidden)
        self.u = parameter(trunc_normal(rng, (edge_hidden, heads)))
        self.psi = Mlp(rng, 5, edge_hidden, edge_hidden)
        self.v = parameter(trunc_normal(rng, (edge_hidden, heads)))
        self.proj = Linear(rng, dim, dim)

    def edge_bias(self, geometry: TriangleGeometry) -> Tensor:
        """G_ij [N x k x heads]."""
        return ops.matmul(self.phi(Tensor(geometry.edges)), self.u)

    def triple_weights(self, geometry: TriangleGeometry) -> Tensor:
        """G_ijk [N x k x k x heads], normalised over the last neighbour axis."""
        logits = ops.matmul(self.psi(Tensor(geometry.triple_features())), self.v)
        return ops.softmax(logits, axis=2)

    def _split(self, x: Tensor):
        n = x.shape[0]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimensionError(f"TwlaBlock expects [N x {self.dim}], got {x.shape}")
        qkv = self.qkv(x)
        q = ops.index(qkv, (slice(None), slice(0, self.dim)))
        k = ops.index(qkv, (slice(None), slice(self.dim, 2 * self.dim)))
        v = ops.index(qkv, (slice(None), slice(2 * self.dim, 3 * self.dim)))
        shape = (n, self.heads, self.head_dim)
        return ops.reshape(q, shape), ops.reshape(k, shape), ops.reshape(v, shape)

    def attention(self, x: Tensor, windows: Windows) -> Tensor:
        """A_ij [N x k x heads]; each (i, head) slice sums to 1 over j."""
        geometry = _geometry(windows)
        q, k, _ = self._split(x)
        return self._attention(q, k, geometry)

    def _attention(self, q: Tensor, k: Tensor, geometry: TriangleGeometry) -> Tensor:
        if q.shape[0] != geometry.num_pixels:
            raise DimensionError(f"{q.shape[0]} tokens but geometry covers {geometry.num_pixels} pixels")
        k_nb = ops.take(k, geometry.neighbors)  # [N x k x heads x Dh]
        scores = ops.sum(ops.mul(ops.reshape(q, (q.shape[0], 1, self.heads, self.head_dim)), k_nb), axis=-1)
        logits = ops.add(ops.mul(scores, 1.0 / math.sqrt(self.head_dim)), self.edge_bias(geometry))
        return ops.softmax(logits, axis=1)

    def forward(self, x: Tensor, windows: Windows) -> Tensor:
        geometry = _geometry(windows)
        q, k, v = self._split(x)
        attn = self._attention(q, k, geometry)
        weight = ops.mul(attn, ops.sum(self.triple_weights(geometry), axis=2))
        v_nb = ops.take(v, geometry.neighbors)
        n = x.shape[0]
        y = ops.sum(ops.mul(ops.reshape(weight, (n, geometry.k, self.heads, 1)), v_nb), axis=1)
        return self.proj(ops.reshape(y, (n, self.dim)))

    def macs(self, tokens: int, k: int) -> int:
        attention = 2 * tokens * k * self.dim
        geometry = self.phi.macs(tokens * k) + self.psi.macs(tokens * k * k)
        return self.qkv.macs(tokens) + attention + geometry + self.proj.macs(tokens)


def twla_forward(block: TwlaBlock, x: Tensor, windows: Windows) -> Tensor:
    """Y for tokens x [N x D]; the caller adds the residual."""
    return block(x, windows)

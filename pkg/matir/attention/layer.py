"""
Transformer layer: TWLA then CGA, each pre-normed, residual, and followed by
its own feed-forward sublayer.
"""
import logging

import numpy as np

from matir.attention.cga import CgaBlock
from matir.attention.triangle import GeometryRegistry
from matir.attention.twla import TwlaBlock
from matir.errors import ContractError
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import LayerNorm, Mlp, Module, to_map, to_tokens

logger = logging.getLogger(__name__)


class TransformerLayer(Module):
    """
    x -> x + TWLA(norm(x)) -> + FFN(norm) -> + CGA(norm) -> + FFN(norm).

    use_twla / use_cga drop an attention sublayer together with its FFN.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        window_size: int = 8,
        neighbors: int = 8,
        heads: int = 1,
        mlp_ratio: int = 2,
        edge_hidden: int = 16,
        use_twla: bool = True,
        use_cga: bool = True,
    ):
        if not (use_twla or use_cga):
            raise ContractError("a transformer layer needs at least one attention sublayer")
        self.channels = channels
        self.window_size = window_size
        self.neighbors = neighbors
        hidden = mlp_ratio * channels
        if use_twla:
            self.norm1 = LayerNorm(channels)
            self.twla = TwlaBlock(rng, channels, edge_hidden, heads)
            self.norm2 = LayerNorm(channels)
            self.ffn1 = Mlp(rng, channels, hidden, channels)
        if use_cga:
            self.norm3 = LayerNorm(channels)
            self.cga = CgaBlock(rng, channels)
            self.norm4 = LayerNorm(channels)
            self.ffn2 = Mlp(rng, channels, hidden, channels)
        self.use_twla = use_twla
        self.use_cga = use_cga

    def forward(self, x: Tensor) -> Tensor:
        _, height, width = x.shape
        tokens = to_tokens(x)
        if self.use_twla:
            geometry = GeometryRegistry.get(height, width, self.window_size, self.neighbors)
            tokens = ops.add(tokens, self.twla(self.norm1(tokens), geometry))
            tokens = ops.add(tokens, self.ffn1(self.norm2(tokens)))
        if self.use_cga:
            normed = to_map(self.norm3(tokens), height, width)
            tokens = ops.add(tokens, to_tokens(self.cga(normed)))
            tokens = ops.add(tokens, self.ffn2(self.norm4(tokens)))
        return to_map(tokens, height, width)

    def zero_residual_branches(self) -> None:
        """Zero every branch output so the layer is the identity."""
        if self.use_twla:
            self.twla.proj.zero_()
            self.ffn1.fc2.zero_()
        if self.use_cga:
            self.cga.w_v.data[...] = 0.0
            self.ffn2.fc2.zero_()

    def macs_breakdown(self, height: int, width: int) -> dict:
        tokens = height * width
        terms = {"twla": 0, "cga": 0, "ffn": 0}
        if self.use_twla:
            terms["twla"] = self.twla.macs(tokens, self.neighbors)
            terms["ffn"] += self.ffn1.macs(tokens)
        if self.use_cga:
            terms["cga"] = self.cga.macs(height, width)
            terms["ffn"] += self.ffn2.macs(tokens)
        return terms


def transformer_layer_forward(layer: TransformerLayer, x: Tensor) -> Tensor:
    return layer(x)

"""
The full restoration network.

    F_S = conv_first(I_LQ)
    F_D = deep layers (transformer / IRSS, per layer_pattern) applied to F_S
    F_R = F_D + F_S
    I_HQ = head(F_R) + residual(I_LQ)

The SR head is conv + GELU, pixel-shuffle upsampling (x2/x3 in one stage, x4
as two x2 stages), then a 3x3 conv to RGB plus the bicubic-upsampled input.
The denoise head is a 3x3 conv to RGB plus the input itself.
"""
import logging
from typing import List, Tuple, Union

import numpy as np

from matir.attention.layer import TransformerLayer
from matir.errors import ContractError, DimensionError
from matir.irss.block import IrssBlock
from matir.model.config import MatIrConfig
from matir.resample import upsample_tensor
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import Conv2d, Module

logger = logging.getLogger(__name__)

IMAGE_CHANNELS = 3
DeepLayer = Union[TransformerLayer, IrssBlock]


def upsample_stages(scale: int) -> Tuple[int, ...]:
    if scale == 4:
        return (2, 2)
    if scale in (2, 3):
        return (scale,)
    return ()


class MatIrModel(Module):
    """Shallow conv stem, ordered deep layers, task head."""

    def __init__(self, config: MatIrConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c = config.channels
        self.conv_first = Conv2d(rng, IMAGE_CHANNELS, c)
        self.layers: List[DeepLayer] = [self._make_layer(rng, kind) for kind in config.layer_kinds()]
        if config.task == "sr":
            self.conv_before_upsample = Conv2d(rng, c, c)
            self.upsample = [Conv2d(rng, c, c * s * s) for s in upsample_stages(config.scale)]
        self.conv_last = Conv2d(rng, c, IMAGE_CHANNELS)
        logger.info(
            f"Built MatIR model: task={config.task} scale={config.scale} layers={''.join(config.layer_kinds())} "
            f"params={self.num_parameters()}"
        )

    def _make_layer(self, rng: np.random.Generator, kind: str) -> DeepLayer:
        cfg = self.config
        if kind == "T":
            return TransformerLayer(
                rng,
                cfg.channels,
                window_size=cfg.window_size,
                neighbors=cfg.neighbors,
                heads=cfg.heads,
                mlp_ratio=cfg.mlp_ratio,
                edge_hidden=cfg.edge_hidden,
                use_twla=not cfg.remove_twla,
                use_cga=not cfg.remove_cga,
            )
        return IrssBlock(
            rng,
            cfg.channels,
            state_size=cfg.state_size,
            expand=cfg.expand,
            directions=cfg.scan_directions,
            conv_kernel=cfg.conv_kernel,
        )

    def check_input(self, image: Tensor) -> None:
        if image.ndim != 3 or image.shape[0] != IMAGE_CHANNELS:
            raise DimensionError(f"expected an image of shape [3 x H x W], got {image.shape}")
        _, height, width = image.shape
        w = self.config.window_size
        if height % w or width % w:
            raise ContractError(
                f"input {height}x{width} is not a multiple of window size {w}; pad it first (see pad_to_multiple)"
            )

    def features(self, image: Tensor) -> Tensor:
        """F_R = F_D + F_S."""
        shallow = self.conv_first(image)
        deep = shallow
        for layer in self.layers:
            deep = layer(deep)
        return ops.add(deep, shallow)

    def forward(self, image: Tensor) -> Tensor:
        """[3 x H x W] -> [3 x sH x sW]."""
        self.check_input(image)
        fused = self.features(image)
        if self.config.task == "denoise":
            return ops.add(self.conv_last(fused), image)
        x = ops.gelu(self.conv_before_upsample(fused))
        for conv, s in zip(self.upsample, upsample_stages(self.config.scale)):
            x = ops.pixel_shuffle(conv(x), s)
        return ops.add(self.conv_last(x), upsample_tensor(image, self.config.scale))

    def zero_residual_branches(self) -> None:
        """Zero every deep-layer branch output and the final conv: forward becomes the global residual."""
        for layer in self.layers:
            if isinstance(layer, IrssBlock):
                layer.out_proj.zero_()
            else:
                layer.zero_residual_branches()
        self.conv_last.zero_()


def build(config: MatIrConfig) -> MatIrModel:
    """Deterministic under config.seed."""
    return MatIrModel(config)


def pad_to_multiple(image: np.ndarray, multiple: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """Reflect-pad [C x H x W] on the bottom/right to a multiple; returns the original (H, W)."""
    _, height, width = image.shape
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h == 0 and pad_w == 0:
        return image, (height, width)
    mode = "reflect" if height > pad_h and width > pad_w else "edge"
    return np.pad(image, ((0, 0), (0, pad_h), (0, pad_w)), mode=mode), (height, width)

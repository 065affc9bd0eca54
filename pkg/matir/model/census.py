"""
Parameter census and analytic multiply-accumulate (MAC) estimates.

MACs per term:
    stem  conv_first at H x W
    twla  qkv/proj projections, k-neighbour scores and aggregation, phi/psi maps
    cga   pooling, four C x C products, elementwise rescale
    ffn   both Mlp layers after each attention sublayer
    irss  in/out projections, depthwise conv, per-direction x/dt projections
          and the N-state scan; every piece is proportional to H * W
    head  reconstruction convs (upsampler convs at their working resolution)
"""
import logging
from typing import Dict

from matir.irss.block import IrssBlock
from matir.model.network import MatIrModel, upsample_stages

logger = logging.getLogger(__name__)

FLOP_TERMS = ("stem", "twla", "cga", "ffn", "irss", "head")


def count_params(model: MatIrModel) -> int:
    return model.num_parameters()


def flops_breakdown(model: MatIrModel, height: int, width: int) -> Dict[str, int]:
    """MACs of one forward pass at H x W input, per term."""
    terms = {name: 0 for name in FLOP_TERMS}
    terms["stem"] = model.conv_first.macs(height, width)
    for layer in model.layers:
        if isinstance(layer, IrssBlock):
            terms["irss"] += layer.macs(height, width)
        else:
            for name, value in layer.macs_breakdown(height, width).items():
                terms[name] += value
    if model.config.task == "sr":
        terms["head"] += model.conv_before_upsample.macs(height, width)
        h, w = height, width
        for conv, s in zip(model.upsample, upsample_stages(model.config.scale)):
            terms["head"] += conv.macs(h, w)
            h, w = h * s, w * s
        terms["head"] += model.conv_last.macs(h, w)
    else:
        terms["head"] += model.conv_last.macs(height, width)
    return terms


def estimate_flops(model: MatIrModel, height: int, width: int) -> int:
    return sum(flops_breakdown(model, height, width).values())

"""
Attention sublayers: channel global attention and triangular window local
attention, combined in one transformer layer.
"""
from matir.attention.cga import CgaBlock, cga_forward
from matir.attention.layer import TransformerLayer, transformer_layer_forward
from matir.attention.triangle import (
    GeometryRegistry,
    TriangleGeometry,
    TriangleWindow,
    build_triangle_windows,
    edge_angle,
    max_neighbors,
    triangle_groups,
    windows_from_neighbors,
)
from matir.attention.twla import TwlaBlock, twla_forward

__all__ = [
    "CgaBlock",
    "cga_forward",
    "TransformerLayer",
    "transformer_layer_forward",
    "GeometryRegistry",
    "TriangleGeometry",
    "TriangleWindow",
    "build_triangle_windows",
    "edge_angle",
    "max_neighbors",
    "triangle_groups",
    "windows_from_neighbors",
    "TwlaBlock",
    "twla_forward",
]

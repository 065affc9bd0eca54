"""
Multi-directional 2D scanning built on the selective state-space scan.
"""
from matir.irss.block import IrssBlock, irss_forward, irss_forward_ndir
from matir.irss.paths import (
    ALL_PATHS,
    DIRECTION_SETS,
    ScanPath,
    flatten,
    inverse_order,
    path_order,
    paths_for,
    unflatten,
)

__all__ = [
    "IrssBlock",
    "irss_forward",
    "irss_forward_ndir",
    "ALL_PATHS",
    "DIRECTION_SETS",
    "ScanPath",
    "flatten",
    "inverse_order",
    "path_order",
    "paths_for",
    "unflatten",
]

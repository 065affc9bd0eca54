"""
Directional traversal orders of a 2D grid.

A path is a permutation `order` of the row-major pixel indices: sequence
position s visits pixel order[s]. Backward paths are exact reversals.
"""
import logging
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from matir.errors import ContractError, DimensionError
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import to_map, to_tokens

logger = logging.getLogger(__name__)


class ScanPath(str, Enum):
    """Four dense stride-1 traversals of an H x W grid."""
    ROW_FORWARD = "row_forward"
    ROW_BACKWARD = "row_backward"
    COL_FORWARD = "col_forward"
    COL_BACKWARD = "col_backward"


ALL_PATHS: Tuple[ScanPath, ...] = (
    ScanPath.ROW_FORWARD,
    ScanPath.ROW_BACKWARD,
    ScanPath.COL_FORWARD,
    ScanPath.COL_BACKWARD,
)

# Two directions: upper-left to lower-right and back.
DIRECTION_SETS: Dict[int, Tuple[ScanPath, ...]] = {
    1: (ScanPath.ROW_FORWARD,),
    2: (ScanPath.ROW_FORWARD, ScanPath.ROW_BACKWARD),
    4: ALL_PATHS,
}


def paths_for(directions: int) -> Tuple[ScanPath, ...]:
    """
    Raises:
        ContractError if directions is not 1, 2 or 4
    """
    try:
        return DIRECTION_SETS[directions]
    except KeyError:
        raise ContractError(f"scan directions must be one of {sorted(DIRECTION_SETS)}, got {directions}") from None


def path_order(path: ScanPath, height: int, width: int) -> np.ndarray:
    """Row-major pixel index visited at each sequence position."""
    if height < 1 or width < 1:
        raise ContractError(f"grid must be at least 1x1, got {height}x{width}")
    grid = np.arange(height * width, dtype=np.int64).reshape(height, width)
    if path in (ScanPath.ROW_FORWARD, ScanPath.ROW_BACKWARD):
        order = grid.reshape(-1)
    else:
        order = grid.T.reshape(-1)
    if path in (ScanPath.ROW_BACKWARD, ScanPath.COL_BACKWARD):
        order = order[::-1]
    return order.copy()


def inverse_order(path: ScanPath, height: int, width: int) -> np.ndarray:
    """Sequence position of each row-major pixel."""
    return np.argsort(path_order(path, height, width), kind="stable")


def flatten(x: Tensor, path: ScanPath) -> Tensor:
    """[C x H x W] -> [H*W x C] in path order."""
    _, height, width = x.shape
    return ops.take(to_tokens(x), path_order(path, height, width))


def unflatten(seq: Tensor, path: ScanPath, height: int, width: int) -> Tensor:
    """
    Inverse of flatten.

    Raises:
        DimensionError if the sequence length is not height * width
    """
    if seq.shape[0] != height * width:
        raise DimensionError(f"unflatten: sequence length {seq.shape[0]} != {height}x{width}")
    return to_map(ops.take(seq, inverse_order(path, height, width)), height, width)

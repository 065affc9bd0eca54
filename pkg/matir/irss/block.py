"""
Image-restoration state-space block.

    u, z  = split(in_proj(norm(x)))
    u     = silu(dwconv(u))
    y_p   = unflatten(ssm_p(flatten(u, p)), p)      for each scan path p
    out   = x + out_proj(mean_p(y_p) * silu(z))
"""
import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np

from matir.errors import ContractError, DimensionError
from matir.irss.paths import ScanPath, inverse_order, path_order, paths_for
from matir.ssm.selective import SelectiveSsm
from matir.tensor import ops
from matir.tensor.core import Tensor
from matir.tensor.module import DepthwiseConv2d, LayerNorm, Linear, Module, to_map, to_tokens

logger = logging.getLogger(__name__)


class IrssBlock(Module):
    """
    One independent scan (its own projections and A) per direction; branches
    are averaged so output scale does not depend on the direction count.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        channels: int,
        state_size: int = 16,
        expand: int = 2,
        directions: int = 4,
        conv_kernel: int = 3,
    ):
        self.channels = channels
        self.inner = expand * channels
        self.paths: Tuple[ScanPath, ...] = paths_for(directions)
        self.norm = LayerNorm(channels)
        self.in_proj = Linear(rng, channels, 2 * self.inner, bias=False)
        self.dwconv = DepthwiseConv2d(rng, self.inner, conv_kernel)
        self.scans: List[SelectiveSsm] = [SelectiveSsm(rng, self.inner, state_size) for _ in self.paths]
        self.out_proj = Linear(rng, self.inner, channels, bias=False)

    @property
    def directions(self) -> int:
        return len(self.paths)

    def pre(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        """Row-major scan inputs u [HW x Ci] and gate logits z [HW x Ci]."""
        if x.ndim != 3 or x.shape[0] != self.channels:
            raise DimensionError(f"IrssBlock expects [{self.channels} x H x W], got {x.shape}")
        _, height, width = x.shape
        xz = self.in_proj(self.norm(to_tokens(x)))
        u = ops.index(xz, (slice(None), slice(0, self.inner)))
        z = ops.index(xz, (slice(None), slice(self.inner, 2 * self.inner)))
        u = ops.silu(self.dwconv(to_map(u, height, width)))
        return to_tokens(u), z

    def scan_paths(self, u: Tensor, height: int, width: int, paths: Sequence[ScanPath]) -> List[Tensor]:
        """Per-path scan outputs, each back in row-major order [HW x Ci]."""
        outputs = []
        for path in paths:
            scan = self.scans[self.paths.index(path)]
            seq = ops.take(u, path_order(path, height, width))
            outputs.append(ops.take(scan(seq), inverse_order(path, height, width)))
        return outputs

    @staticmethod
    def merge(outputs: Sequence[Tensor]) -> Tensor:
        """Elementwise mean, summed in path order."""
        total = outputs[0]
        for out in outputs[1:]:
            total = ops.add(total, out)
        return ops.mul(total, 1.0 / len(outputs))

    def post(self, x: Tensor, merged: Tensor, z: Tensor) -> Tensor:
        _, height, width = x.shape
        gated = ops.mul(merged, ops.silu(z))
        return ops.add(x, to_map(self.out_proj(gated), height, width))

    def forward(self, x: Tensor, directions: Optional[int] = None) -> Tensor:
        paths = self.paths if directions is None else self._subset(directions)
        _, height, width = x.shape
        u, z = self.pre(x)
        return self.post(x, self.merge(self.scan_paths(u, height, width, paths)), z)

    def _subset(self, directions: int) -> Tuple[ScanPath, ...]:
        paths = paths_for(directions)
        missing = [p.value for p in paths if p not in self.paths]
        if missing:
            raise ContractError(f"block built with {self.directions} directions has no scan for {missing}")
        return paths

    def tie_scans(self) -> None:
        """Copy the first direction's scan parameters into every other direction."""
        source = self.scans[0].parameters()
        for scan in self.scans[1:]:
            for name, p in scan.named_parameters():
                p.data[...] = source[name].data

    def macs(self, height: int, width: int) -> int:
        tokens = height * width
        total = self.in_proj.macs(tokens) + self.dwconv.macs(height, width)
        total += sum(scan.macs(tokens) for scan in self.scans)
        total += tokens * self.inner  # gate
        return total + self.out_proj.macs(tokens)


def irss_forward(block: IrssBlock, x: Tensor) -> Tensor:
    """All directions the block was built with (four by default)."""
    return block(x)


def irss_forward_ndir(block: IrssBlock, x: Tensor, directions: int) -> Tensor:
    """
    Forward over the first 1, 2 or 4 paths of ALL_PATHS.

    Raises:
        ContractError for any other direction count, or one the block lacks
    """
    if directions not in (1, 2, 4):
        raise ContractError(f"directions must be 1, 2 or 4, got {directions}")
    return block(x, directions=directions)


"""
Network assembly, configuration, census and checkpoints.
"""
from matir.model.census import FLOP_TERMS, count_params, estimate_flops, flops_breakdown
from matir.model.checkpoint import load_checkpoint, save_checkpoint, sidecar_path
from matir.model.config import (
    PRESETS,
    MatIrConfig,
    config_hash,
    load_config,
    make_config,
    preset,
    save_config,
)
from matir.model.network import MatIrModel, build, pad_to_multiple, upsample_stages

__all__ = [
    "FLOP_TERMS",
    "count_params",
    "estimate_flops",
    "flops_breakdown",
    "load_checkpoint",
    "save_checkpoint",
    "sidecar_path",
    "PRESETS",
    "MatIrConfig",
    "config_hash",
    "load_config",
    "make_config",
    "preset",
    "save_config",
    "MatIrModel",
    "build",
    "pad_to_multiple",
    "upsample_stages",
]

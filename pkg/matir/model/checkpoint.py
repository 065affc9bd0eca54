"""
Checkpoint save/load for MatIrModel.

A checkpoint is a tensor container (one entry per named parameter) plus a
`<checkpoint>.cfg` sidecar holding the config it was built from.
"""
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from matir.errors import FormatError
from matir.model.config import MatIrConfig, load_config, save_config
from matir.model.network import MatIrModel
from matir.tensor.serialization import read_tensors, write_tensors

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".cfg")


def save_checkpoint(model: MatIrModel, path: PathLike) -> None:
    path = Path(path)
    write_tensors(path, {name: p.data for name, p in model.named_parameters()})
    save_config(model.config, sidecar_path(path))
    logger.info(f"Saved checkpoint {path} ({model.num_parameters()} params)")


def load_checkpoint(path: PathLike, config: Optional[MatIrConfig] = None) -> MatIrModel:
    """
    Rebuild a model from a checkpoint.

    Args:
        path: Checkpoint file
        config: Architecture to load into; defaults to the sidecar config

    Raises:
        FormatError on a corrupt file or when the stored census does not match
        the config (the message names expected vs found counts)
    """
    path = Path(path)
    if config is None:
        side = sidecar_path(path)
        if not side.is_file():
            raise FormatError(f"{path}: no config given and no sidecar {side.name}")
        config = load_config(side)
    stored = read_tensors(path)
    model = MatIrModel(config)
    expected = model.parameters()

    found_count = int(sum(a.size for a in stored.values()))
    expected_count = model.num_parameters()
    problems = []
    missing = [n for n in expected if n not in stored]
    unexpected = [n for n in stored if n not in expected]
    if missing:
        problems.append(f"missing {len(missing)} tensors (first: {missing[0]})")
    if unexpected:
        problems.append(f"{len(unexpected)} unexpected tensors (first: {unexpected[0]})")
    for name, p in expected.items():
        if name in stored and stored[name].shape != p.shape:
            problems.append(f"{name}: expected shape {p.shape}, found {stored[name].shape}")
            break
    if problems or found_count != expected_count:
        raise FormatError(
            f"{path}: checkpoint census mismatch: expected {expected_count} params in {len(expected)} tensors, "
            f"found {found_count} in {len(stored)}; " + "; ".join(problems),
            expected=expected_count,
            found=found_count,
        )
    for name, p in expected.items():
        p.data[...] = np.asarray(stored[name], dtype=np.float64)
    logger.info(f"Loaded checkpoint {path} ({expected_count} params)")
    return model

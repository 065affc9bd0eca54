"""
Architecture configuration, presets and the key=value config file format.
Enables: "Build the tiny model", "What is the hash of this config?"
"""
import hashlib
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from matir.attention.triangle import max_neighbors
from matir.errors import ConfigError

logger = logging.getLogger(__name__)

LAYER_KINDS = frozenset({"T", "M"})


def describe_validation_error(err: ValidationError) -> str:
    """One 'field: message' clause per pydantic error."""
    parts = []
    for e in err.errors():
        field = ".".join(str(p) for p in e.get("loc", ())) or "config"
        parts.append(f"{field}: {e.get('msg', 'invalid')}")
    return "; ".join(parts)


class MatIrConfig(BaseModel):
    """Hyperparameters of one network; unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    channels: int = Field(64, ge=1)
    depth: int = Field(4, ge=2)
    layer_pattern: str = "TM"
    window_size: int = Field(8, ge=2)
    neighbors: int = Field(8, ge=1)
    state_size: int = Field(16, ge=1)
    expand: int = Field(2, ge=1)
    heads: int = Field(1, ge=1)
    mlp_ratio: int = Field(2, ge=1)
    edge_hidden: int = Field(16, ge=1)
    scan_directions: int = 4
    conv_kernel: int = Field(3, ge=1)
    scale: int = Field(2, ge=1, le=4)
    task: Literal["sr", "denoise"] = "sr"
    seed: int = Field(0, ge=0)
    remove_twla: bool = False
    remove_cga: bool = False
    remove_irss: bool = False

    @model_validator(mode="after")
    def _check_consistency(self) -> "MatIrConfig":
        if (self.scale == 1) != (self.task == "denoise"):
            raise ValueError(f"scale must be 1 exactly when task is denoise (task={self.task}, scale={self.scale})")
        if not self.layer_pattern or set(self.layer_pattern) - LAYER_KINDS:
            raise ValueError(f"layer_pattern must be a non-empty string over 'T'/'M', got {self.layer_pattern!r}")
        if self.scan_directions not in (1, 2, 4):
            raise ValueError(f"scan_directions must be 1, 2 or 4, got {self.scan_directions}")
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if self.channels % self.heads:
            raise ValueError(f"heads={self.heads} must divide channels={self.channels}")
        if self.remove_twla and self.remove_cga:
            raise ValueError("remove_twla and remove_cga together leave transformer layers empty")
        limit = max_neighbors(self.window_size)
        if not self.remove_twla and self.neighbors > limit:
            raise ValueError(f"neighbors={self.neighbors} exceeds {limit} for window_size={self.window_size}")
        return self

    def layer_kinds(self) -> List[str]:
        """'T' or 'M' per deep layer, repeating layer_pattern; removed IRSS layers are skipped."""
        kinds = [self.layer_pattern[i % len(self.layer_pattern)] for i in range(self.depth)]
        if self.remove_irss:
            kinds = [k for k in kinds if k != "M"]
        return kinds


PRESETS: Dict[str, Dict[str, Any]] = {
    "tiny": dict(channels=16, depth=4, layer_pattern="TM", window_size=4, neighbors=3, state_size=8, scale=2),
    "small": dict(channels=96, depth=8, window_size=8, neighbors=8, state_size=16),
    "medium": dict(channels=144, depth=8, window_size=8, neighbors=8, state_size=16),
    "large": dict(channels=180, depth=8, window_size=8, neighbors=8, state_size=16),
    # Per-layer widths unknown; census is whatever this builds.
    "full": dict(channels=180, depth=24, window_size=8, neighbors=8, state_size=16, heads=6),
}


def make_config(**fields: Any) -> MatIrConfig:
    """
    Raises:
        ConfigError naming every invalid field
    """
    try:
        return MatIrConfig(**fields)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {describe_validation_error(e)}") from e


def preset(name: str, **overrides: Any) -> MatIrConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(sorted(PRESETS))})")
    fields = dict(PRESETS[name])
    fields.update(overrides)
    return make_config(**fields)


def load_config(path: Union[str, Path], **overrides: Any) -> MatIrConfig:
    """Read a key=value config file; CLI overrides win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = {k: v for k, v in dotenv_values(path).items() if v is not None}
    raw.update(overrides)
    logger.debug(f"Loaded config {path} with keys {sorted(raw)}")
    return make_config(**raw)


def save_config(config: MatIrConfig, path: Union[str, Path]) -> None:
    lines = []
    for key, value in config.model_dump().items():
        text = str(value).lower() if isinstance(value, bool) else str(value)
        lines.append(f"{key}={text}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def config_hash(config: MatIrConfig) -> str:
    """First 12 hex chars of sha-256 over the canonical JSON dump."""
    canonical = config.model_dump_json()
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

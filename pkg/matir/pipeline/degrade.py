"""
Synthetic degradations: bicubic downscaling and additive Gaussian noise.
"""
import logging
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from matir.errors import ConfigError, ContractError
from matir.model.config import describe_validation_error
from matir.pipeline.images import ImagePlane
from matir.resample import resize_array

logger = logging.getLogger(__name__)


class DegradationSpec(BaseModel):
    """BicubicDown(scale) or GaussianNoise(sigma in 8-bit units), seeded."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["bicubic", "noise"]
    scale: int = Field(1, ge=1, le=4)
    sigma: float = Field(0.0, ge=0.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_kind(self) -> "DegradationSpec":
        if self.kind == "bicubic" and self.scale < 2:
            raise ValueError(f"bicubic degradation needs scale in 2..4, got {self.scale}")
        return self

    def with_seed(self, seed: int) -> "DegradationSpec":
        return self.model_copy(update={"seed": seed})

    def describe(self) -> str:
        if self.kind == "bicubic":
            return f"bicubic x{self.scale}"
        return f"gaussian sigma={self.sigma:g}"


def make_degradation(**fields: Any) -> DegradationSpec:
    try:
        return DegradationSpec(**fields)
    except ValidationError as e:
        raise ConfigError(f"invalid degradation: {describe_validation_error(e)}") from e


def bicubic_down(img: ImagePlane, scale: int) -> ImagePlane:
    """
    Raises:
        ContractError if the image dimensions are not divisible by scale
    """
    if img.height % scale or img.width % scale:
        raise ContractError(f"image {img.height}x{img.width} not divisible by scale {scale}")
    small = resize_array(img.to_array(), img.height // scale, img.width // scale)
    return ImagePlane.from_array(small)


def add_noise(img: ImagePlane, sigma: float, seed: int) -> ImagePlane:
    """i.i.d. N(0, sigma^2) per pixel and channel, clamped to [0, 255]."""
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    noisy = img.pixels.astype(np.float64) + rng.normal(0.0, sigma, size=img.pixels.shape)
    return ImagePlane(np.clip(np.round(noisy), 0, 255).astype(np.uint8))


def degrade(img: ImagePlane, spec: DegradationSpec) -> ImagePlane:
    if spec.kind == "bicubic":
        return bicubic_down(img, spec.scale)
    return add_noise(img, spec.sigma, spec.seed)

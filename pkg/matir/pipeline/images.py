"""
8-bit image planes and file I/O (PNG via Pillow, binary PPM P6 directly).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from matir.errors import ContractError, FormatError
from matir.tensor.core import Tensor

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
IMAGE_SUFFIXES = frozenset({".png", ".ppm"})


@dataclass(frozen=True)
class ImagePlane:
    """uint8 pixels [H x W x channels], channels 1 or 3, row-major."""
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.dtype != np.uint8:
            raise ContractError(f"ImagePlane pixels must be uint8, got {self.pixels.dtype}")
        if self.pixels.ndim != 3 or self.pixels.shape[2] not in (1, 3):
            raise ContractError(f"ImagePlane pixels must be H x W x 1|3, got {self.pixels.shape}")

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def channels(self) -> int:
        return int(self.pixels.shape[2])

    def to_rgb(self) -> "ImagePlane":
        if self.channels == 3:
            return self
        return ImagePlane(np.repeat(self.pixels, 3, axis=2))

    def to_array(self) -> np.ndarray:
        """[C x H x W] float64 in [0, 1]."""
        return np.transpose(self.pixels, (2, 0, 1)).astype(np.float64) / 255.0

    def to_tensor(self) -> Tensor:
        return Tensor(self.to_array())

    @classmethod
    def from_array(cls, planes: np.ndarray) -> "ImagePlane":
        """Quantise [C x H x W] floats in [0, 1] (values outside are clamped)."""
        pixels = np.clip(np.round(np.asarray(planes) * 255.0), 0, 255).astype(np.uint8)
        return cls(np.ascontiguousarray(np.transpose(pixels, (1, 2, 0))))

    def crop(self, top: int, left: int, height: int, width: int) -> "ImagePlane":
        return ImagePlane(self.pixels[top:top + height, left:left + width].copy())


def _read_ppm(blob: bytes, source: str) -> ImagePlane:
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{source}: truncated PPM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P6":
        raise FormatError(f"{source}: not a binary PPM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"{source}: malformed PPM header") from e
    if maxval != 255:
        raise FormatError(f"{source}: only 8-bit PPM supported (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    payload = blob[pos:pos + width * height * 3]
    if len(payload) != width * height * 3:
        raise FormatError(f"{source}: truncated PPM payload")
    return ImagePlane(np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3).copy())


def read_image(path: PathLike) -> ImagePlane:
    """
    Read an 8-bit PNG or P6 PPM.

    Raises:
        FormatError if the file cannot be read or decoded
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: cannot read image ({e})") from e
    if blob[:2] == b"P6":
        return _read_ppm(blob, str(path))
    try:
        with Image.open(path) as img:
            img.load()
            mode = "L" if img.mode in ("L", "I", "I;16") else "RGB"
            pixels = np.asarray(img.convert(mode), dtype=np.uint8)
    except (UnidentifiedImageError, OSError, ValueError) as e:
        raise FormatError(f"{path}: cannot decode image ({e})") from e
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    return ImagePlane(pixels.copy())


def write_image(path: PathLike, plane: ImagePlane) -> None:
    """Write PNG, or P6 PPM when the suffix is .ppm."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        rgb = plane.to_rgb().pixels
        header = f"P6\n{plane.width} {plane.height}\n255\n".encode("ascii")
        path.write_bytes(header + rgb.tobytes())
        return
    pixels = plane.pixels[:, :, 0] if plane.channels == 1 else plane.pixels
    Image.fromarray(pixels).save(path, format="PNG")


def list_images(directory: PathLike):
    """Image files of a directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FormatError(f"dataset directory not found: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)

"""
Binary tensor container used for checkpoints.

Layout (little-endian): b"MATR", u32 version, u32 entry count, then per entry
u32 name length, UTF-8 name, u32 rank, u64 dims, float32 payload.
Arrays are downcast to float32 on save and upcast to float64 on load.
"""
import logging
import os
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping, Union

import numpy as np

from matir.errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"MATR"
FORMAT_VERSION = 1

PathLike = Union[str, Path]


def write_tensors(path: PathLike, tensors: Mapping[str, np.ndarray]) -> None:
    """Write named arrays atomically (temp file + rename)."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(tensors))]
    for name, array in tensors.items():
        encoded = name.encode("utf-8")
        array = np.asarray(array)
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(array.astype("<f4").tobytes(order="C"))
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(chunks))
    os.replace(tmp, path)
    logger.debug(f"Wrote {len(tensors)} tensors to {path}")


class _Reader:
    def __init__(self, blob: bytes, source: str):
        self.blob = blob
        self.pos = 0
        self.source = source

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.blob):
            raise FormatError(f"{self.source}: truncated file (needed {size} bytes at offset {self.pos})")
        chunk = self.blob[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_tensors(path: PathLike) -> "OrderedDict[str, np.ndarray]":
    """
    Read every entry of a tensor container.

    Raises:
        FormatError on bad magic, unknown version, truncation or trailing bytes
    """
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise FormatError(f"{path}: cannot read checkpoint ({e})") from e
    reader = _Reader(blob, str(path))
    if reader.take(4) != MAGIC:
        raise FormatError(f"{path}: bad magic bytes, not a MATR checkpoint")
    version, count = reader.unpack("<II")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} (expected {FORMAT_VERSION})")
    entries: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{path}: entry name is not valid UTF-8") from e
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}Q") if rank else ()
        numel = int(np.prod(dims)) if dims else 1
        payload = reader.take(4 * numel)
        entries[name] = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(dims)
    if reader.pos != len(blob):
        raise FormatError(f"{path}: {len(blob) - reader.pos} trailing bytes after {count} entries")
    return entries

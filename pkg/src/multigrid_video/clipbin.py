"""CLIPBIN: a minimal binary container for one dense video clip.

Layout, all little-endian:

    bytes 0-3    magic ``b"CLB1"``
    bytes 4-19   four uint32: frames, height, width, channels
    bytes 20-    frames*height*width*channels float32 values, C order,
                 indexed (frame, row, col, channel)
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import ClipbinError
from .grids import check_clip

MAGIC = b"CLB1"
_HEADER = struct.Struct("<4s4I")

# Refuse headers implying more data than any sane clip; guards against
# allocating huge buffers for a corrupt or truncated file.
_MAX_ELEMENTS = 1 << 33


def write_clipbin(path: str | Path, clip: np.ndarray) -> None:
    """Write a (frames, height, width, channels) float array to `path`."""
    clip = check_clip(clip).astype(np.float32, copy=False)
    header = _HEADER.pack(MAGIC, *clip.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(clip).tobytes())


def read_clipbin(path: str | Path) -> np.ndarray:
    """Read a CLIPBIN file back into a float32 array.

    Raises ``ClipbinError`` on a bad magic, an empty or oversized shape, or
    a payload whose length does not match the header.
    """
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise ClipbinError(f"{path}: truncated header ({len(header)} bytes)")
        magic, frames, height, width, channels = _HEADER.unpack(header)
        if magic != MAGIC:
            raise ClipbinError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        shape = (frames, height, width, channels)
        count = frames * height * width * channels
        if count == 0:
            raise ClipbinError(f"{path}: empty shape {shape}")
        if count > _MAX_ELEMENTS:
            raise ClipbinError(f"{path}: implausible shape {shape}")
        payload = fh.read(4 * count + 1)
    if len(payload) != 4 * count:
        raise ClipbinError(
            f"{path}: payload is {len(payload)} bytes, expected {4 * count} "
            f"for shape {shape}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()

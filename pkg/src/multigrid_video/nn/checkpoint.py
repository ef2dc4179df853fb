"""Checkpoint container: named arrays plus a JSON metadata block.

Layout, little-endian:

    bytes 0-3   magic ``b"MGCK"``
    bytes 4-7   uint32 format version (currently 1)
    bytes 8-11  uint32 byte length of the JSON header
    header      UTF-8 JSON: {"arrays": [{"name", "shape", "dtype"}, ...],
                             "meta": {...}}
    payload     raw C-order array buffers, concatenated in header order

Arrays are written sorted by name so identical states produce identical
files.  Metadata must be JSON-serializable; the trainer stores the seed and
next iteration there, which is all the random state a resumed run needs.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"MGCK"
VERSION = 1
_PREFIX = struct.Struct("<4sII")
_ALLOWED_DTYPES = {"<f4", "<f8", "<i4", "<i8"}


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray],
                    meta: dict) -> None:
    """Write arrays and metadata to `path` atomically enough for tests
    (temp file then rename)."""
    entries = []
    buffers = []
    for name in sorted(arrays):
        # tobytes() always emits C order, so contiguity does not matter here
        arr = np.asarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<").str
        if dtype not in _ALLOWED_DTYPES:
            raise CheckpointError(f"array {name!r} has unsupported dtype {arr.dtype}")
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        buffers.append(arr.astype(dtype, copy=False).tobytes())
    header = json.dumps({"arrays": entries, "meta": meta},
                        sort_keys=True, separators=(",", ":")).encode()

    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_PREFIX.pack(MAGIC, VERSION, len(header)))
        fh.write(header)
        for buf in buffers:
            fh.write(buf)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as ``(arrays, meta)``.

    Raises ``CheckpointError`` on a bad magic, unknown version, malformed
    header, or a payload that does not match the declared shapes.
    """
    with open(path, "rb") as fh:
        prefix = fh.read(_PREFIX.size)
        if len(prefix) < _PREFIX.size:
            raise CheckpointError(f"{path}: truncated prefix")
        magic, version, header_len = _PREFIX.unpack(prefix)
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        header_raw = fh.read(header_len)
        if len(header_raw) != header_len:
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(header_raw)
            entries = header["arrays"]
            meta = header["meta"]
        except (ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"{path}: malformed header: {exc}") from exc

        arrays: dict[str, np.ndarray] = {}
        for entry in entries:
            try:
                name = entry["name"]
                shape = tuple(int(s) for s in entry["shape"])
                dtype = np.dtype(entry["dtype"])
            except (KeyError, TypeError, ValueError) as exc:
                raise CheckpointError(f"{path}: malformed array entry {entry}") from exc
            if dtype.str not in _ALLOWED_DTYPES:
                raise CheckpointError(f"{path}: array {name!r} has bad dtype {dtype}")
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated payload for {name!r}")
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return arrays, meta

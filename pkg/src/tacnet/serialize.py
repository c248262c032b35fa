"""Binary container used by dataset files and checkpoints.

Layout (documented, stable):

    bytes 0..7    8-byte ASCII magic
    bytes 8..15   little-endian uint64, byte length of the JSON header
    next H bytes  UTF-8 JSON header; holds caller metadata plus an
                  "arrays" list of {"name", "shape"} in payload order
    remainder     the arrays' float64 little-endian values, row-major,
                  concatenated in header order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import InvalidDatasetError

DATASET_MAGIC = b"TACDATA1"
CHECKPOINT_MAGIC = b"TACCKPT1"


def write_container(path, magic: bytes, header: dict, arrays: dict) -> None:
    """Write ``header`` plus named float64 arrays to ``path``."""
    if len(magic) != 8:
        raise ValueError("magic must be exactly 8 bytes")
    meta = dict(header)
    meta["arrays"] = [
        {"name": name, "shape": list(np.asarray(arr).shape)} for name, arr in arrays.items()
    ]
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_container(path, magic: bytes) -> tuple[dict, dict]:
    """Read back (header, arrays) written by :func:`write_container`."""
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise InvalidDatasetError(
                f"bad magic in {path}: expected {magic!r}, got {got!r}"
            )
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header.pop("arrays", []):
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise InvalidDatasetError(f"truncated payload in {path}")
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return header, arrays

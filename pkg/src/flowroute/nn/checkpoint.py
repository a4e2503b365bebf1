"""Checkpoint archive: magic line, length-prefixed JSON index, little-endian float64 blob.

Layout::

    b"FLOWCKPT1\\n"
    uint64 LE   length of the JSON index in bytes
    JSON index  {"format_version", "config", "tensors": [{"name", "shape", "offset"}]}
    blob        every tensor as '<f8', C order, at its byte offset
"""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import InputValidationError

MAGIC = b"FLOWCKPT1\n"
FORMAT_VERSION = 1


def save(path: str | os.PathLike, arrays: dict[str, np.ndarray], config: dict) -> None:
    index, chunks, offset = [], [], 0
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype="<f8")  # keeps 0-d shapes; tobytes() is C order
        index.append({"name": name, "shape": list(a.shape), "offset": offset})
        chunks.append(a.tobytes())
        offset += a.nbytes
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "config": config, "tensors": index}, sort_keys=True
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise InputValidationError(f"{path} is not a flowroute checkpoint")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    header = json.loads(raw[pos : pos + hlen])
    if header.get("format_version") != FORMAT_VERSION:
        raise InputValidationError(f"unsupported checkpoint version {header.get('format_version')}")
    blob = memoryview(raw)[pos + hlen :]
    arrays = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(blob, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["name"]] = a.reshape(shape).astype(np.float64)
    return arrays, header["config"]

"""Flat binary container of named float64 arrays.

Layout (all integers little-endian)::

    magic      8 bytes  b"GLUQARR\\0"
    version    uint32
    length     uint64   byte length of the JSON manifest
    manifest   UTF-8 JSON {"arrays": [{"name", "shape", "offset"}...], "meta": {...}}
    payload    concatenated little-endian float64 buffers; offsets are relative
               to the start of the payload
"""

import json
import struct
from pathlib import Path

import numpy as np

__all__ = ["save_arrays", "load_arrays", "CheckpointError", "FORMAT_VERSION"]

MAGIC = b"GLUQARR\0"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIQ")


class CheckpointError(IOError):
    """Malformed or incompatible checkpoint file."""


def save_arrays(path, arrays: dict, meta: dict | None = None) -> None:
    entries, buffers, offset = [], [], 0
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        buffers.append(arr.tobytes())
        offset += arr.nbytes
    manifest = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, len(manifest)))
        fh.write(manifest)
        for buf in buffers:
            fh.write(buf)


def load_arrays(path):
    """Return ``(arrays, meta)`` from a container written by :func:`save_arrays`."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, length = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    start = _HEADER.size + length
    manifest = json.loads(raw[_HEADER.size:start].decode())
    arrays = {}
    for entry in manifest["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        lo = start + entry["offset"]
        hi = lo + 8 * count
        if hi > len(raw):
            raise CheckpointError(f"{path}: array {entry['name']!r} runs past end of file")
        arrays[entry["name"]] = np.frombuffer(raw[lo:hi], dtype="<f8").reshape(shape).astype(np.float64)
    return arrays, manifest.get("meta", {})

"""Versioned binary envelope for fitted models.

Layout: ``DTMD`` magic, uint32 format version, uint32 header length, a JSON
header (kind, metadata, array manifest), then the raw little-endian arrays
back to back. Floats in the header use ``repr`` so they reload bit-exactly.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"DTMD"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


class EnvelopeError(ValueError):
    pass


def pack(kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> bytes:
    manifest = []
    chunks = []
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name])
        dtype = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in "|" else arr.dtype
        arr = arr.astype(dtype, copy=False)
        manifest.append({"name": name, "dtype": dtype.str, "shape": list(arr.shape)})
        chunks.append(arr.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "arrays": manifest}, sort_keys=True).encode()
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def unpack(blob: bytes) -> tuple[str, dict, dict[str, np.ndarray]]:
    if len(blob) < _PREFIX.size:
        raise EnvelopeError("truncated model blob")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise EnvelopeError(f"bad magic {magic!r}")
    if version != VERSION:
        raise EnvelopeError(f"unsupported envelope version {version}")
    header = json.loads(blob[_PREFIX.size:_PREFIX.size + hlen])
    off = _PREFIX.size + hlen
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=off)
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
        off += count * dtype.itemsize
    if off != len(blob):
        raise EnvelopeError("trailing bytes after declared arrays")
    return header["kind"], header["meta"], arrays

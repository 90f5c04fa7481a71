"""Little-endian binary containers with a common header discipline.

Layout: 4-byte magic, u32 version, u64 metadata length, UTF-8 JSON
metadata, then the raw float64 payload arrays in the order listed under
``meta["arrays"]`` (name and shape per entry).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import FormatError, UnsupportedVersion

_VERSION = 1


def write_arrays(path, magic: bytes, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(magic) != 4:
        raise ValueError("magic must be exactly 4 bytes")
    header = dict(meta)
    header["arrays"] = [
        {"name": name, "shape": list(np.asarray(arr).shape)} for name, arr in arrays.items()
    ]
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<I", _VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_arrays(path, magic: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != magic:
        raise FormatError(f"bad magic {payload[:4]!r}, expected {magic!r}", offset=0)
    (version,) = struct.unpack_from("<I", payload, 4)
    if version != _VERSION:
        raise UnsupportedVersion(f"container version {version} not supported", offset=4)
    (meta_len,) = struct.unpack_from("<Q", payload, 8)
    off = 16
    try:
        meta = json.loads(payload[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata block: {exc}", offset=off) from exc
    off += meta_len
    arrays = {}
    for entry in meta.pop("arrays", []):
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        need = off + 8 * count
        if len(payload) < need:
            raise FormatError(
                f"truncated payload for array {entry['name']!r}", offset=len(payload)
            )
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=off).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        off += 8 * count
    return meta, arrays

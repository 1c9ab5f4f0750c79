"""Deterministic binary container for kernel caches and policy tables.

Layout: magic, format version, a length-prefixed JSON header (sorted keys)
holding user metadata plus the array manifest (name, dtype, shape, in
order), then the raw C-order bytes of each array.  No timestamps or other
environment-dependent bytes, so identical inputs produce identical files.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CRS1"
FORMAT_VERSION = 1


def write_blob(path, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    manifest = [
        {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
        for name, arr in arrays.items()
    ]
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta, "arrays": manifest},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(header)))
        fh.write(header)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_blob(path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path} is not a crsched blob")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported blob format version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode())
    offset = 12 + hlen
    arrays = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
        count = int(np.prod(shape))
        arrays[entry["name"]] = np.frombuffer(
            raw, dtype=dtype, count=count, offset=offset
        ).reshape(shape).copy()
        offset += nbytes
    return header["meta"], arrays

"""Versioned binary container shared by all trained models.

Layout: 4-byte magic ``SOMN``, uint32 format version, uint32 header length,
UTF-8 JSON header (kind, config, array names/shapes), then the named arrays
concatenated as little-endian float32 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SOMN"
FORMAT_VERSION = 1


class ContainerError(RuntimeError):
    pass


def save_container(path, kind: str, config: dict, arrays: dict) -> None:
    header = {
        "kind": kind,
        "config": config,
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        f.write(blob)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_container(path, expect_kind: str | None = None):
    """Return (kind, config, arrays). Arrays come back as float64."""
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format version {version}")
    header = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ContainerError(f"{path}: expected {expect_kind}, found {header['kind']}")
    arrays = {}
    off = 12 + hlen
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        n = int(np.prod(shape)) if shape else 1
        a = np.frombuffer(raw, dtype="<f4", count=n, offset=off)
        arrays[spec["name"]] = a.reshape(shape).astype(np.float64)
        off += 4 * n
    return header["kind"], header["config"], arrays

"""Versioned binary checkpoints.

Layout (little endian)::

    b"EAFFCKPT"            magic, 8 bytes
    u16                    format version
    u32                    header length H
    H bytes                UTF-8 JSON header: {"meta": {...}, "arrays": [[name, shape], ...]}
    float64 data           every array row-major, in header order
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptData, VersionMismatch

MAGIC = b"EAFFCKPT"
VERSION = 1


def dumps(arrays: dict, meta: dict) -> bytes:
    names = sorted(arrays)
    header = json.dumps(
        {"meta": meta, "arrays": [[n, list(np.shape(arrays[n]))] for n in names]}, sort_keys=True
    ).encode()
    body = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    return MAGIC + struct.pack("<HI", VERSION, len(header)) + header + body


def loads(data: bytes):
    if len(data) < 14 or data[:8] != MAGIC:
        raise CorruptData("not a checkpoint file")
    version, hlen = struct.unpack("<HI", data[8:14])
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    try:
        header = json.loads(data[14 : 14 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptData("unreadable checkpoint header") from exc
    arrays, off = {}, 14 + hlen
    for name, shape in header["arrays"]:
        n = int(np.prod(shape)) * 8
        if off + n > len(data):
            raise CorruptData(f"checkpoint truncated inside {name}")
        arrays[name] = np.frombuffer(data[off : off + n], dtype="<f8").reshape(shape).copy()
        off += n
    if off != len(data):
        raise CorruptData("trailing bytes after checkpoint data")
    return arrays, header["meta"]


def save(path, arrays: dict, meta: dict) -> None:
    Path(path).write_bytes(dumps(arrays, meta))


def load(path):
    return loads(Path(path).read_bytes())

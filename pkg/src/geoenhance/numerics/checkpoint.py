"""Binary checkpoint format.

Layout (all integers uint32 little-endian)::

    b"RGUE" | version byte (1) | tensor count
    per tensor: name length | UTF-8 name | rank | extents... | float32 LE data

Tensors are written in sorted name order so equal parameter sets give
byte-identical files.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from ..errors import LoadError

MAGIC = b"RGUE"
VERSION = 1


def dumps(tensors: Mapping[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(bytes([VERSION]))
    buf.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob: bytes, source: str = "<bytes>") -> dict[str, np.ndarray]:
    view = memoryview(blob)
    if len(blob) < 9 or bytes(view[:4]) != MAGIC:
        raise LoadError(source, "bad magic bytes")
    if view[4] != VERSION:
        raise LoadError(source, f"unsupported version {view[4]}")
    pos = 5

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise LoadError(source, "truncated file")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = bytes(take(nlen)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if rank else 1
        out[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(blob):
        raise LoadError(source, "trailing bytes")
    return out


def save_checkpoint(tensors: Mapping[str, np.ndarray], path) -> None:
    Path(path).write_bytes(dumps(tensors))


def load_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise LoadError(path, f"cannot read ({exc.strerror})") from exc
    return loads(blob, str(path))

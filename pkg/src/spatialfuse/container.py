"""Binary tensor container shared by checkpoints and datasets.

Layout (all integers little-endian)::

    b"SFSE" | version u32 | count u32 | count x entry
    entry = name_len u16 | name (utf-8) | rank u8 | dims u32 x rank | float32 data

Entries are written in lexicographic name order.
"""

from __future__ import annotations

import os
import struct
from typing import Mapping

import numpy as np

from .errors import FormatError

MAGIC = b"SFSE"
VERSION = 1


def dumps(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF or arr.ndim > 0xFF:
            raise FormatError(f"entry {name!r} cannot be encoded")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    """Parse a container; raises FormatError naming the byte offset of any defect."""
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise FormatError(f"truncated container: {what} needs {n} bytes at offset {pos}, {len(buf) - pos} left")
        out = buf[pos:pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise FormatError("bad magic at offset 0")
    (version,) = struct.unpack("<I", take(4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    out: dict[str, np.ndarray] = {}
    prev = None
    for _ in range(count):
        start = pos
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"entry name at offset {start + 2} is not utf-8") from None
        if prev is not None and name <= prev:
            raise FormatError(f"entry {name!r} at offset {start} out of order")
        (rank,) = struct.unpack("<B", take(1, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(take(4 * n, f"data of {name!r}"), dtype="<f4")
        out[name] = data.astype(np.float32).reshape(dims)
        prev = name
    if pos != len(buf):
        raise FormatError(f"{len(buf) - pos} trailing bytes at offset {pos}")
    return out


def save(path: str | os.PathLike, arrays: Mapping[str, np.ndarray]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(dumps(arrays))
    os.replace(tmp, path)


def load(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        return loads(fh.read())

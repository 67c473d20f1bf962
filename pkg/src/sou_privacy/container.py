"""SOUM binary container: named little-endian float arrays.

Layout::

    b"SOUM" | version u32 | entry count u32 |
    per entry: name length u16 | UTF-8 name | dtype u8 (0=f32, 1=f64) | ndim u8 | dims u32... | data

All integers are little-endian.  Models and feature stores share the format.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

__all__ = ["MAGIC", "VERSION", "ContainerError", "write_container", "read_container", "dumps", "loads"]

MAGIC = b"SOUM"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


class ContainerError(ValueError):
    pass


def dumps(entries: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        if arr.dtype not in _TAGS:
            raise ContainerError(f"entry {name!r}: dtype {arr.dtype} is not float32/float64")
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF or arr.ndim > 0xFF:
            raise ContainerError(f"entry {name!r}: name or rank too large")
        tag = _TAGS[arr.dtype]
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", tag, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    return b"".join(parts)


def loads(buf: bytes) -> dict[str, np.ndarray]:
    view = memoryview(buf)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise ContainerError(f"truncated container: need {n} bytes at offset {pos}")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise ContainerError("bad magic: not a SOUM container")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = bytes(take(name_len)).decode("utf-8")
        tag, ndim = struct.unpack("<BB", take(2))
        if tag not in _DTYPES:
            raise ContainerError(f"entry {name!r}: unknown dtype tag {tag}")
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = _DTYPES[tag]
        size = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
        entries[name] = np.frombuffer(bytes(take(size)), dtype=dtype).reshape(dims)
    if pos != len(view):
        raise ContainerError(f"{len(view) - pos} trailing bytes after last entry")
    return entries


def write_container(path, entries: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(entries))


def read_container(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())

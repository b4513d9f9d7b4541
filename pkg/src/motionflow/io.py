"""Versioned binary containers with checksums, plus JSON side formats.

Layout: magic (4 bytes) | version u32 | header-JSON (u32 length + utf-8) |
array count u32 | per array: name (u16 length + utf-8), dtype code (1 byte,
'f' float64 / 'i' int64), ndim u8, dims u32..., raw little-endian payload |
crc32 u32 over everything after the magic. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1

_DTYPES = {"f": "<f8", "i": "<i8"}
_CODES = {np.dtype("float64"): "f", np.dtype("int64"): "i"}


def write_container(path, magic: bytes, header: dict, arrays: dict[str, np.ndarray]):
    if len(magic) != 4:
        raise DataError(f"magic must be 4 bytes, got {magic!r}")
    body = bytearray()
    body += struct.pack("<I", FORMAT_VERSION)
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body += struct.pack("<I", len(header_bytes))
    body += header_bytes
    body += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _CODES:
            arr = arr.astype(np.float64)
        code = _CODES[arr.dtype]
        name_bytes = name.encode("utf-8")
        body += struct.pack("<H", len(name_bytes))
        body += name_bytes
        body += code.encode("ascii")
        body += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            body += struct.pack("<I", dim)
        body += arr.astype(_DTYPES[code]).tobytes()
    checksum = zlib.crc32(bytes(body))
    Path(path).write_bytes(magic + bytes(body) + struct.pack("<I", checksum))


def read_container(path, expect_magic: bytes | None = None):
    """Return (magic, version, header, arrays). Raises DataError on corruption."""
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise DataError(f"{path}: truncated container")
    magic, body, stored = raw[:4], raw[4:-4], raw[-4:]
    if expect_magic is not None and magic != expect_magic:
        raise DataError(f"{path}: magic {magic!r} != expected {expect_magic!r}")
    if zlib.crc32(body) != struct.unpack("<I", stored)[0]:
        raise DataError(f"{path}: checksum mismatch")
    off = 0

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        vals = struct.unpack_from(fmt, body, off)
        off += size
        return vals[0] if len(vals) == 1 else vals

    version = take("<I")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported container version {version}")
    header_len = take("<I")
    header = json.loads(body[off:off + header_len].decode("utf-8"))
    off += header_len
    n_arrays = take("<I")
    arrays: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        name_len = take("<H")
        name = body[off:off + name_len].decode("utf-8")
        off += name_len
        code = body[off:off + 1].decode("ascii")
        off += 1
        if code not in _DTYPES:
            raise DataError(f"{path}: unknown dtype code {code!r}")
        ndim = take("<B")
        shape = tuple(take("<I") for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        arr = np.frombuffer(body[off:off + nbytes], dtype=_DTYPES[code]).reshape(shape)
        off += nbytes
        arrays[name] = arr.copy()
    return magic, version, header, arrays


def refuse_overwrite(path, force: bool):
    if Path(path).exists() and not force:
        raise DataError(f"{path} exists; pass --force to overwrite")

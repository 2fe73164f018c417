"""Low-level helpers shared by the binary file formats.

All formats are little-endian: u32 integers, f32 payloads, 4-byte magic.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

from .errors import IntegrityError

U32 = struct.Struct("<I")
U8 = struct.Struct("<B")


def write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(U32.pack(value))


def write_u8(fh: BinaryIO, value: int) -> None:
    fh.write(U8.pack(value))


def read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise IntegrityError(f"truncated file while reading {what}")
    return buf


def read_u32(fh: BinaryIO, what: str = "u32") -> int:
    return U32.unpack(read_exact(fh, 4, what))[0]


def read_u8(fh: BinaryIO, what: str = "u8") -> int:
    return U8.unpack(read_exact(fh, 1, what))[0]


def check_magic(fh: BinaryIO, magic: bytes, path) -> None:
    got = fh.read(len(magic))
    if got != magic:
        raise IntegrityError(f"{path}: bad magic {got!r}, expected {magic!r}")


def write_f32_block(fh: BinaryIO, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    fh.write(arr.tobytes())


def read_f32_block(fh: BinaryIO, count: int, what: str) -> np.ndarray:
    buf = read_exact(fh, count * 4, what)
    return np.frombuffer(buf, dtype="<f4").astype(np.float32, copy=True)

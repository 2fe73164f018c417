"""LSFC checkpoint format: named float32 tensors, bit-exact round trip.

Layout: magic ``LSFC``, version u32, tensor count u32, then per tensor
(name length u32, UTF-8 name, rank u32, dims u32 each, f32 little-endian
data).  Tensors are written in lexicographic name order so identical
parameter sets always produce identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ._binio import check_magic, read_exact, read_f32_block, read_u32, write_f32_block, write_u32
from .errors import ConfigError, IntegrityError

MAGIC = b"LSFC"
VERSION = 1


def write_checkpoint(path, tensors: dict[str, np.ndarray]) -> None:
    path = Path(path)
    ordered = sorted(tensors)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        write_u32(fh, VERSION)
        write_u32(fh, len(ordered))
        for name in ordered:
            arr = np.asarray(tensors[name])
            if arr.dtype != np.float32:
                raise ConfigError(f"checkpoint tensor {name!r} must be float32, got {arr.dtype}")
            encoded = name.encode("utf-8")
            write_u32(fh, len(encoded))
            fh.write(encoded)
            write_u32(fh, arr.ndim)
            for dim in arr.shape:
                write_u32(fh, dim)
            write_f32_block(fh, arr)


def read_checkpoint(path) -> dict[str, np.ndarray]:
    path = Path(path)
    tensors: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        check_magic(fh, MAGIC, path)
        version = read_u32(fh, "version")
        if version != VERSION:
            raise IntegrityError(f"{path}: unsupported LSFC version {version}")
        count = read_u32(fh, "tensor count")
        for _ in range(count):
            name_len = read_u32(fh, "name length")
            name = read_exact(fh, name_len, "tensor name").decode("utf-8")
            if name in tensors:
                raise IntegrityError(f"{path}: duplicate tensor name {name!r}")
            rank = read_u32(fh, "rank")
            dims = tuple(read_u32(fh, "dim") for _ in range(rank))
            n = 1
            for dim in dims:
                n *= dim
            tensors[name] = read_f32_block(fh, n, f"tensor {name!r}").reshape(dims)
        trailing = fh.read(1)
        if trailing:
            raise IntegrityError(f"{path}: trailing bytes after last tensor")
    return tensors

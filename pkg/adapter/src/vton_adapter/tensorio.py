"""Writer/reader for the engine's ".vten" tensor files.

Byte layout (the adapter talks to the engine only through files):
magic `VTEN`, u16 LE version = 1, u8 dtype code (1 = f32), u8 ndim,
ndim x u32 LE dims, row-major little-endian f32 payload, no padding.
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"VTEN"
VERSION = 1
DTYPE_F32 = 1


def write_vten(array, path) -> None:
    arr = np.ascontiguousarray(np.asarray(array, dtype=np.float32))
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f4").tobytes(order="C"))
    os.replace(tmp, path)


def read_vten(path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"{path}: bad magic")
    version, dtype_code, ndim = struct.unpack("<HBB", raw[4:8])
    if version != VERSION or dtype_code != DTYPE_F32:
        raise ValueError(f"{path}: unsupported version/dtype")
    shape = struct.unpack(f"<{ndim}I", raw[8:8 + 4 * ndim])
    return np.frombuffer(raw[8 + 4 * ndim:], dtype="<f4").reshape(shape).copy()

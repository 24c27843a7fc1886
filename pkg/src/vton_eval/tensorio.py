"""Binary tensor interchange (".vten" files).

Layout: magic ``VTEN``, u16 LE version (=1), u8 dtype code (1 = f32),
u8 ndim, ndim x u32 LE dims, then the row-major little-endian f32
payload. No padding anywhere. Scalars are float64 in memory and
float32 on disk.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"VTEN"
VERSION = 1
DTYPE_F32 = 1


class TensorFormatError(ValueError):
    """Raised for malformed .vten files or invalid payloads."""


@dataclass(frozen=True)
class TensorBlob:
    """A finite f32 tensor with an explicit shape."""

    shape: tuple[int, ...]
    values: np.ndarray  # float32, C-contiguous, shaped per `shape`

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float32).reshape(
            np.shape(self.values))
        if arr.shape != self.shape:
            raise TensorFormatError(
                f"payload shape {arr.shape} does not match declared shape {self.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise TensorFormatError("payload contains non-finite values")
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_array(cls, array) -> "TensorBlob":
        arr = np.asarray(array)
        if not np.all(np.isfinite(arr)):
            raise TensorFormatError("payload contains non-finite values")
        arr = np.ascontiguousarray(arr, dtype=np.float32).reshape(arr.shape)
        return cls(shape=arr.shape, values=arr)

    def as_float64(self) -> np.ndarray:
        return self.values.astype(np.float64)


def write_tensor(blob: TensorBlob, path) -> None:
    """Write a blob atomically (temp file + rename)."""
    ndim = len(blob.shape)
    if ndim > 255:
        raise TensorFormatError(f"too many dimensions: {ndim}")
    header = MAGIC + struct.pack("<HBB", VERSION, DTYPE_F32, ndim)
    header += struct.pack(f"<{ndim}I", *blob.shape)
    payload = blob.values.astype("<f4").tobytes(order="C")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def read_tensor(path) -> TensorBlob:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 8:
        raise TensorFormatError(f"{path}: truncated header")
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dtype_code, ndim = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_F32:
        raise TensorFormatError(f"{path}: unknown dtype code {dtype_code}")
    dims_end = 8 + 4 * ndim
    if len(raw) < dims_end:
        raise TensorFormatError(f"{path}: truncated dimension list")
    shape = struct.unpack(f"<{ndim}I", raw[8:dims_end])
    count = 1
    for d in shape:
        count *= d
    payload = raw[dims_end:]
    if len(payload) != 4 * count:
        raise TensorFormatError(
            f"{path}: payload length {len(payload)} does not match shape {shape}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    if not np.all(np.isfinite(values)):
        raise TensorFormatError(f"{path}: payload contains non-finite values")
    return TensorBlob(shape=tuple(shape), values=values)

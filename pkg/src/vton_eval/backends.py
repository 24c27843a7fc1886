"""Providers of the frozen image encoder used by the representation metrics.

Two providers share one interface: the builtin patch-statistics embedder
(pure numpy, deterministic, needs no model weights) and a file-based
provider that loads adapter-produced ".vten" embeddings from a directory.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import FULL_IMAGE, BinaryMask, Embedding, ValidationError, masked_variant
from .tensorio import read_tensor

BUILTIN_BACKEND_ID = "builtin-patchstat"
GRID = 8
BUILTIN_DIMENSION = GRID * GRID * 3 * 2  # per cell and channel: mean and std


class BackendError(ValueError):
    """Missing embedding file, dimension mismatch, or misuse of a backend."""


class DegenerateEmbeddingError(BackendError):
    """Cosine asked of a zero-norm embedding (empty masked region)."""


@dataclass(frozen=True)
class BackendDescriptor:
    backend_id: str
    dimension: int

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValidationError(f"dimension must be positive, got {self.dimension}")


def embed_builtin(image: np.ndarray, source_id: str = "",
                  variant: str = FULL_IMAGE) -> Embedding:
    """Deterministic stand-in embedding: 8x8 grid of per-channel mean and std.

    The image is partitioned into an 8x8 grid of cells (row-major); each
    cell contributes mean and population std per RGB channel, giving
    8*8*3*2 = 384 dimensions. Summation order is fixed, so identical
    images give bit-identical vectors on any platform.
    """
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(f"expected an RGB raster, got shape {arr.shape}")
    h, w = arr.shape[:2]
    if h == 0 or w == 0:
        raise ValidationError("zero-area image")
    if h < GRID or w < GRID:
        raise ValidationError(f"image must be at least {GRID}x{GRID}, got {h}x{w}")
    rows = [h * i // GRID for i in range(GRID + 1)]
    cols = [w * j // GRID for j in range(GRID + 1)]
    vec = np.empty(BUILTIN_DIMENSION, dtype=np.float64)
    idx = 0
    for i in range(GRID):
        for j in range(GRID):
            cell = arr[rows[i]:rows[i + 1], cols[j]:cols[j + 1], :]
            for c in range(3):
                channel = cell[:, :, c]
                vec[idx] = channel.mean()
                vec[idx + 1] = channel.std()
                idx += 2
    return Embedding(vector=vec, backend_id=BUILTIN_BACKEND_ID,
                     source_id=source_id, variant=variant)


def apply_mask(image: np.ndarray, mask: BinaryMask) -> np.ndarray:
    """Element-wise product: background zeroed, no cropping or renormalization."""
    arr = np.asarray(image)
    if arr.shape[:2] != mask.bits.shape:
        raise ValidationError(
            f"mask shape {mask.bits.shape} does not match image {arr.shape[:2]}")
    return arr * mask.bits[:, :, None]


class BuiltinBackend:
    """Computes patch-statistics embeddings directly from pixels."""

    def __init__(self):
        self.descriptor = BackendDescriptor(BUILTIN_BACKEND_ID, BUILTIN_DIMENSION)

    @property
    def backend_id(self) -> str:
        return self.descriptor.backend_id

    def full_embedding(self, source_id: str, image: np.ndarray) -> Embedding:
        return embed_builtin(image, source_id=source_id, variant=FULL_IMAGE)

    def masked_embedding(self, source_id: str, image: np.ndarray,
                         mask: BinaryMask, level: int) -> Embedding:
        return embed_builtin(apply_mask(image, mask), source_id=source_id,
                             variant=masked_variant(level))


class FileBackend:
    """Loads adapter-produced embeddings: `<dir>/<source_id>.<variant>.vten`."""

    def __init__(self, directory, dimension: int | None = None):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise BackendError(f"backend directory {self.directory} does not exist")
        self._dimension = dimension
        self.backend_id = f"file:{self.directory}"

    @property
    def descriptor(self) -> BackendDescriptor:
        if self._dimension is None:
            raise BackendError("backend dimension not yet known (load an embedding first)")
        return BackendDescriptor(self.backend_id, self._dimension)

    def load_embedding(self, source_id: str, variant: str) -> Embedding:
        path = self.directory / f"{source_id}.{variant}.vten"
        if not os.path.exists(path):
            raise BackendError(f"missing embedding file {path}")
        blob = read_tensor(path)
        vector = blob.as_float64().reshape(-1)
        if self._dimension is None:
            self._dimension = int(vector.size)
        elif vector.size != self._dimension:
            raise BackendError(
                f"{path}: dimension {vector.size} does not match backend dimension "
                f"{self._dimension}")
        return Embedding(vector=vector, backend_id=self.backend_id,
                         source_id=source_id, variant=variant)

    def full_embedding(self, source_id: str, image=None) -> Embedding:
        return self.load_embedding(source_id, FULL_IMAGE)

    def masked_embedding(self, source_id: str, image=None,
                         mask=None, level: int = 0) -> Embedding:
        return self.load_embedding(source_id, masked_variant(level))


def cosine(u: Embedding, v: Embedding) -> float:
    """Cosine similarity, clamped into [-1, 1] against rounding."""
    if u.backend_id != v.backend_id:
        raise BackendError(
            f"embeddings from different backends: {u.backend_id!r} vs {v.backend_id!r}")
    if u.dimension != v.dimension:
        raise BackendError(f"dimension mismatch: {u.dimension} vs {v.dimension}")
    duu = float(np.dot(u.vector, u.vector))
    dvv = float(np.dot(v.vector, v.vector))
    if duu == 0.0 or dvv == 0.0:
        raise DegenerateEmbeddingError("cosine undefined for zero-norm embedding")
    value = float(np.dot(u.vector, v.vector)) / math.sqrt(duu * dvv)
    return max(-1.0, min(1.0, value))

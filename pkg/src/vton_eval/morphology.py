"""Binary mathematical morphology and the nested erosion hierarchy.

Border convention: pixels outside the image are background, so
foreground touching the border erodes. Erosion applied k times with an
element B equals a single erosion by the k-fold self-dilation of B;
the hierarchy is computed iteratively and that identity is enforced by
the test suite rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage, signal

from .core import BinaryMask, ValidationError

DEFAULT_LEVELS = 4


@dataclass(frozen=True)
class StructuringElement:
    """Small odd-sized binary neighborhood with a centered origin."""

    bits: np.ndarray  # 2-D bool, odd width and height, at least one True

    def __post_init__(self):
        arr = np.asarray(self.bits).astype(bool)
        if arr.ndim != 2:
            raise ValidationError(f"element must be 2-D, got shape {arr.shape}")
        h, w = arr.shape
        if h % 2 == 0 or w % 2 == 0:
            raise ValidationError(f"element dimensions must be odd, got {h}x{w}")
        if not arr.any():
            raise ValidationError("element must contain at least one true bit")
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @classmethod
    def square(cls, size: int = 3) -> "StructuringElement":
        """The default element: an all-true square (3x3 unless told otherwise)."""
        return cls(bits=np.ones((size, size), dtype=bool))


def erode(mask: BinaryMask, elem: StructuringElement | None = None) -> BinaryMask:
    """Pixel stays foreground iff the element centered there fits inside the foreground."""
    elem = elem or StructuringElement.square(3)
    if mask.height == 0 or mask.width == 0:
        raise ValidationError("mask dimensions must be positive")
    out = ndimage.binary_erosion(mask.bits, structure=elem.bits, border_value=0)
    return BinaryMask(bits=out)


def dilate(mask: BinaryMask, elem: StructuringElement | None = None) -> BinaryMask:
    """Minkowski dilation with centered origin."""
    elem = elem or StructuringElement.square(3)
    if mask.height == 0 or mask.width == 0:
        raise ValidationError("mask dimensions must be positive")
    out = ndimage.binary_dilation(mask.bits, structure=elem.bits, border_value=0)
    return BinaryMask(bits=out)


def self_dilated(elem: StructuringElement, times: int) -> StructuringElement:
    """The element dilated by itself `times` times (support grows, origin stays centered).

    times=0 returns the element unchanged; the support of the result is
    B (+) B (+) ... with `times` Minkowski sums.
    """
    if times < 0:
        raise ValidationError(f"times must be >= 0, got {times}")
    support = elem.bits.astype(np.uint8)
    for _ in range(times):
        support = (signal.convolve2d(support, elem.bits.astype(np.uint8), mode="full") > 0
                   ).astype(np.uint8)
    return StructuringElement(bits=support.astype(bool))


def erosion_hierarchy(mask: BinaryMask,
                      elem: StructuringElement | None = None,
                      levels: int = DEFAULT_LEVELS) -> list[BinaryMask]:
    """Nested masks from progressive erosion: level 0 is the input itself.

    Returns `levels` masks; callers read the degenerate flag off
    `BinaryMask.is_empty` (an empty level is not an error).
    """
    if levels < 1:
        raise ValidationError(f"levels must be >= 1, got {levels}")
    elem = elem or StructuringElement.square(3)
    out = [mask]
    for _ in range(1, levels):
        out.append(erode(out[-1], elem))
    return out

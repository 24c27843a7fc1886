"""Pixel and distribution metrics: PSNR, SSIM, LPIPS aggregation, FID.

Images are (H, W, 3) uint8 rasters on the 0..255 range; everything is
computed in float64. SSIM uses the original reference parameterization
(11x11 Gaussian window, sigma 1.5, K1=0.01, K2=0.03, L=255), which the
protocol leaves unstated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import ValidationError

PSNR_PEAK = 255.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class MetricInputError(ValueError):
    """Shape/dimension mismatch or otherwise unusable metric input."""


def _as_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricInputError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.ndim != 3:
        raise MetricInputError(f"expected rasters, got shape {a.shape}")
    return a, b


def psnr(a, b) -> float:
    """10*log10(L^2 / MSE) over all pixels and channels; +inf for identical images.

    The infinite sentinel is never averaged; callers report those pairs
    separately.
    """
    a, b = _as_pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PSNR_PEAK ** 2 / mse)


def _gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    half = size // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _window_mean(img2d: np.ndarray, kernel: np.ndarray, half: int) -> np.ndarray:
    # Separable Gaussian filtering; the constant-padded border never
    # reaches the valid interior that we slice out.
    out = ndimage.correlate1d(img2d, kernel, axis=0, mode="constant")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="constant")
    return out[half:-half, half:-half]


def ssim(a, b) -> float:
    """Mean local SSIM, per channel then averaged across channels."""
    a, b = _as_pair(a, b)
    h, w = a.shape[:2]
    if min(h, w) < SSIM_WINDOW:
        raise MetricInputError(
            f"image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    kernel = _gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)
    half = SSIM_WINDOW // 2
    c1 = (SSIM_K1 * PSNR_PEAK) ** 2
    c2 = (SSIM_K2 * PSNR_PEAK) ** 2
    per_channel = []
    for c in range(a.shape[2]):
        x = a[:, :, c]
        y = b[:, :, c]
        mu_x = _window_mean(x, kernel, half)
        mu_y = _window_mean(y, kernel, half)
        var_x = _window_mean(x * x, kernel, half) - mu_x ** 2
        var_y = _window_mean(y * y, kernel, half) - mu_y ** 2
        cov_xy = _window_mean(x * y, kernel, half) - mu_x * mu_y
        num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov_xy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
        per_channel.append(float(np.mean(num / den)))
    return float(np.mean(per_channel))


def lpips_aggregate(layer_feats_a, layer_feats_b, layer_weights) -> float:
    """Weighted perceptual distance over deep-feature layer stacks.

    Per layer: unit-normalize each spatial feature vector across channels,
    take per-channel-weighted squared differences, average spatially, then
    sum across layers. Feature stacks are (C, H, W); weights are (C,).
    """
    if not (len(layer_feats_a) == len(layer_feats_b) == len(layer_weights)):
        raise MetricInputError("layer count mismatch between stacks and weights")
    if not layer_feats_a:
        raise MetricInputError("at least one layer is required")
    total = 0.0
    for idx, (fa, fb, w) in enumerate(zip(layer_feats_a, layer_feats_b, layer_weights)):
        fa = np.asarray(fa, dtype=np.float64)
        fb = np.asarray(fb, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64).reshape(-1)
        if fa.shape != fb.shape:
            raise MetricInputError(f"layer {idx}: shape mismatch {fa.shape} vs {fb.shape}")
        if fa.ndim != 3:
            raise MetricInputError(f"layer {idx}: expected (C, H, W), got {fa.shape}")
        if w.size != fa.shape[0]:
            raise MetricInputError(
                f"layer {idx}: {w.size} weights for {fa.shape[0]} channels")
        na = fa / np.maximum(np.linalg.norm(fa, axis=0, keepdims=True), 1e-12)
        nb = fb / np.maximum(np.linalg.norm(fb, axis=0, keepdims=True), 1e-12)
        diff2 = (na - nb) ** 2
        weighted = np.tensordot(w, diff2, axes=(0, 0))  # (H, W)
        total += float(weighted.mean())
    return total


@dataclass(frozen=True)
class GaussianStats:
    """Sample mean and unbiased covariance of a feature set."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        cov = np.asarray(self.covariance, dtype=np.float64)
        if self.count < 2:
            raise ValidationError(f"need at least 2 samples, got {self.count}")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError(
                f"covariance shape {cov.shape} does not match dimension {mean.size}")
        if np.abs(cov - cov.T).max() > 1e-9:
            raise ValidationError("covariance is not symmetric within 1e-9")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", (cov + cov.T) / 2.0)

    @property
    def dimension(self) -> int:
        return int(self.mean.size)


def gaussian_stats(features) -> GaussianStats:
    """Two-pass mean and unbiased covariance; deterministic accumulation order."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2:
        raise MetricInputError(f"expected an (N, D) feature matrix, got {feats.shape}")
    n = feats.shape[0]
    if n < 2:
        raise MetricInputError(f"need at least 2 feature vectors, got {n}")
    mean = feats.mean(axis=0)
    centered = feats - mean
    cov = centered.T @ centered / (n - 1)
    return GaussianStats(mean=mean, covariance=cov, count=n)


def sqrtm_psd(matrix: np.ndarray, neg_tol: float = 1e-6) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues in (-neg_tol, 0) are clamped to zero; anything below
    -neg_tol means the matrix is not PSD and raises.
    """
    sym = (matrix + matrix.T) / 2.0
    eigvals, eigvecs = np.linalg.eigh(sym)
    if eigvals.min() < -neg_tol:
        raise MetricInputError(
            f"matrix is not PSD: eigenvalue {eigvals.min():.3e} below -{neg_tol:g}")
    eigvals = np.clip(eigvals, 0.0, None)
    return (eigvecs * np.sqrt(eigvals)) @ eigvecs.T


def fid(s1: GaussianStats, s2: GaussianStats) -> float:
    """Frechet distance between two Gaussian fits.

    ||mu1-mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), with the matrix square
    root taken through the symmetric form S1^(1/2) S2 S1^(1/2). Clamped
    at zero against rounding.
    """
    if s1.dimension != s2.dimension:
        raise MetricInputError(
            f"dimension mismatch: {s1.dimension} vs {s2.dimension}")
    diff = s1.mean - s2.mean
    root1 = sqrtm_psd(s1.covariance)
    inner = root1 @ s2.covariance @ root1
    inner = (inner + inner.T) / 2.0
    eigvals = np.linalg.eigvalsh(inner)
    if eigvals.min() < -1e-6 * max(1.0, abs(float(eigvals.max()))):
        raise MetricInputError(
            f"product matrix is not PSD: eigenvalue {eigvals.min():.3e}")
    trace_sqrt = float(np.sqrt(np.clip(eigvals, 0.0, None)).sum())
    value = float(diff @ diff + np.trace(s1.covariance) + np.trace(s2.covariance)
                  - 2.0 * trace_sqrt)
    return max(0.0, value)

"""Spectral and Laplacian features for ghost detection.

A patch is summarized by 67 numbers: 32 radial-annulus means and 32
radial-annulus standard deviations of its centered log-magnitude
spectrum, then Laplacian variance, patch mean, and patch std.  Ghost
copies modulate the magnitude spectrum with a cosine ruling whose
period encodes the offset and whose depth encodes the blend intensity;
the annulus means track depth while the annulus stds pick up the
ruling, and Laplacian variance separates blur-like energy loss.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fourier import fft2, dft2, fftshift2
from .image import as_gray, extract_patches, PatchGrid

__all__ = [
    "magnitude_spectrum",
    "laplacian",
    "laplacian_variance",
    "RadialProfile",
    "radial_bins",
    "N_RADIAL_BINS",
    "FEATURE_LENGTH",
    "FeatureVector",
    "feature_fingerprint",
    "featurize",
    "featurize_image",
    "high_freq_energy",
    "threshold_detector",
]

N_RADIAL_BINS = 32
# 32 annulus means + 32 annulus stds + [laplacian variance, mean, std]
FEATURE_LENGTH = 2 * N_RADIAL_BINS + 3
_FEATURE_LAYOUT_VERSION = 1
MIN_PATCH_SIDE = 16


def magnitude_spectrum(img) -> np.ndarray:
    """log(1 + |DFT|), quadrant-shifted so the DC bin sits at the center."""
    return fftshift2(np.log1p(np.abs(dft2(as_gray(img)))))


def laplacian(img) -> np.ndarray:
    """3x3 Laplacian (4-neighbor minus 4*center), valid region only.

    Output shape is (height - 2, width - 2); no padding is invented.
    """
    arr = as_gray(img)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError(f"image too small for a 3x3 stencil: {arr.shape}")
    core = arr[1:-1, 1:-1]
    return (
        arr[:-2, 1:-1] + arr[2:, 1:-1] + arr[1:-1, :-2] + arr[1:-1, 2:] - 4.0 * core
    )


def laplacian_variance(img) -> float:
    """Population variance of the valid-region Laplacian response."""
    return float(np.var(laplacian(img)))


class RadialProfile(NamedTuple):
    means: np.ndarray
    stds: np.ndarray
    counts: np.ndarray


# Annulus index maps keyed by (height, width, n_bins); read-only after build.
_BIN_CACHE: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}


def _bin_layout(height: int, width: int, n_bins: int):
    key = (height, width, n_bins)
    cached = _BIN_CACHE.get(key)
    if cached is not None:
        return cached
    cy, cx = height // 2, width // 2
    dist = np.hypot(
        np.arange(height)[:, None] - cy, np.arange(width)[None, :] - cx
    )
    dmax = dist.max()
    if dmax == 0:
        idx = np.zeros((height, width), dtype=np.intp)
    else:
        idx = np.minimum((dist / dmax * n_bins).astype(np.intp), n_bins - 1)
    flat = idx.ravel()
    counts = np.bincount(flat, minlength=n_bins).astype(np.float64)
    flat.flags.writeable = False
    counts.flags.writeable = False
    _BIN_CACHE[key] = (flat, counts)
    return flat, counts


def radial_bins(spectrum, n_bins: int = N_RADIAL_BINS) -> RadialProfile:
    """Per-annulus mean and population std over equal-width normalized radii.

    Radius is distance from the center bin scaled by the largest such
    distance, so annulus edges fall at k/n_bins for k = 0..n_bins.
    Empty annuli report mean 0 and std 0; `counts` flags them.
    """
    arr = np.asarray(spectrum, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D spectrum, got shape {arr.shape}")
    if not (isinstance(n_bins, (int, np.integer)) and n_bins >= 1):
        raise ValueError(f"n_bins must be a positive integer, got {n_bins!r}")
    idx, counts = _bin_layout(arr.shape[0], arr.shape[1], int(n_bins))
    vals = arr.ravel()
    sums = np.bincount(idx, weights=vals, minlength=n_bins)
    sq_sums = np.bincount(idx, weights=vals * vals, minlength=n_bins)
    safe = np.maximum(counts, 1.0)
    means = sums / safe
    variances = np.maximum(sq_sums / safe - means * means, 0.0)
    return RadialProfile(means, np.sqrt(variances), counts.astype(np.intp))


def feature_fingerprint(patch_size: int) -> str:
    """Hash identifying the feature layout a model was trained against."""
    tag = f"patch={int(patch_size)};bins={N_RADIAL_BINS};layout={_FEATURE_LAYOUT_VERSION}"
    return hashlib.sha256(tag.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FeatureVector:
    """One patch's feature values plus the layout fingerprint."""

    values: np.ndarray
    fingerprint: str

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (FEATURE_LENGTH,):
            raise ValueError(
                f"feature vector must have length {FEATURE_LENGTH}, got {vals.shape}"
            )
        object.__setattr__(self, "values", vals)


def _check_patch(patch) -> np.ndarray:
    arr = as_gray(patch)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"patch must be square, got {arr.shape}")
    if arr.shape[0] < MIN_PATCH_SIDE:
        raise ValueError(
            f"patch side must be at least {MIN_PATCH_SIDE}, got {arr.shape[0]}"
        )
    return arr


def _features_from_spectrum(patch: np.ndarray, log_mag: np.ndarray) -> np.ndarray:
    profile = radial_bins(log_mag, N_RADIAL_BINS)
    return np.concatenate(
        [
            profile.means,
            profile.stds,
            [laplacian_variance(patch), float(patch.mean()), float(patch.std())],
        ]
    )


def featurize(patch) -> FeatureVector:
    """Extract the 67-feature summary of one square patch (side >= 16)."""
    arr = _check_patch(patch)
    log_mag = fftshift2(np.log1p(np.abs(dft2(arr))))
    return FeatureVector(
        values=_features_from_spectrum(arr, log_mag),
        fingerprint=feature_fingerprint(arr.shape[0]),
    )


# Patches per batched FFT call; bounds the transform working set.
_FFT_CHUNK = 8


def featurize_image(img, patch_size: int) -> tuple[PatchGrid, np.ndarray, str]:
    """Tile an image and featurize every patch.

    Returns (grid, (n_patches, 67) matrix in row-major patch order,
    fingerprint).  The spectra are computed in chunked batched FFTs;
    the result matches per-patch featurize() exactly.
    """
    if patch_size < MIN_PATCH_SIDE:
        raise ValueError(
            f"patch side must be at least {MIN_PATCH_SIDE}, got {patch_size}"
        )
    grid, patches = extract_patches(img, patch_size)
    out = np.empty((grid.n_patches, FEATURE_LENGTH))
    for start in range(0, grid.n_patches, _FFT_CHUNK):
        chunk = patches[start : start + _FFT_CHUNK]
        log_mags = fftshift2(np.log1p(np.abs(fft2(chunk))))
        for j in range(chunk.shape[0]):
            out[start + j] = _features_from_spectrum(chunk[j], log_mags[j])
    return grid, out, feature_fingerprint(patch_size)


def high_freq_energy(features) -> np.ndarray:
    """Mean of the outer 8 radial-mean bins; scalar blur/ghost metric.

    Accepts a single FeatureVector, a length-67 vector, or an (n, 67)
    matrix; returns a float or a length-n array to match.
    """
    if isinstance(features, FeatureVector):
        features = features.values
    arr = np.asarray(features, dtype=np.float64)
    if arr.shape[-1] != FEATURE_LENGTH:
        raise ValueError(f"expected length-{FEATURE_LENGTH} features, got {arr.shape}")
    outer = arr[..., N_RADIAL_BINS - 8 : N_RADIAL_BINS]
    result = outer.mean(axis=-1)
    return float(result) if np.isscalar(result) or result.ndim == 0 else result


def threshold_detector(metric: float, threshold: float, direction: str) -> bool:
    """Classical single-threshold rule.

    direction "below": anomalous when metric < threshold; "above":
    anomalous when metric > threshold.  Ties are never anomalous.
    """
    if direction == "below":
        return bool(metric < threshold)
    if direction == "above":
        return bool(metric > threshold)
    raise ValueError(f"direction must be 'below' or 'above', got {direction!r}")

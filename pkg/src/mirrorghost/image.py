"""Core grayscale image operations.

An image is a 2D float64 array with every intensity in [0, 1],
indexed [row, col] = [y, x], shape (height, width).  Operations never
mutate their inputs; anything built from convex pixel combinations is
clipped against float round-off so the [0, 1] invariant survives any
chain of public calls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "as_gray",
    "to_grayscale",
    "translate",
    "blend",
    "gaussian_blur",
    "gaussian_kernel_1d",
    "PatchGrid",
    "extract_patches",
]

# Rec. 601 luma weights.
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])


def as_gray(img) -> np.ndarray:
    """Validate and return `img` as a float64 grayscale image.

    Raises ValueError unless `img` is 2D, finite, and within [0, 1].
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("image is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image intensities must lie in [0, 1]")
    return arr


def to_grayscale(rgb) -> np.ndarray:
    """Convert a (height, width, 3) RGB array in [0, 1] to grayscale.

    Luma weights 0.299 R + 0.587 G + 0.114 B.
    """
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected a (height, width, 3) RGB image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("channel intensities must lie in [0, 1]")
    return np.clip(arr @ _GRAY_WEIGHTS, 0.0, 1.0)


def _check_offsets(tx, ty, width: int, height: int) -> tuple[int, int]:
    for name, val in (("tx", tx), ("ty", ty)):
        if not isinstance(val, (int, np.integer)):
            raise ValueError(f"{name} must be an integer, got {val!r}")
    limit = min(width, height)
    if not (0 <= tx < limit and 0 <= ty < limit):
        raise ValueError(
            f"offsets must lie in [0, {limit}) for a {width}x{height} image, "
            f"got ({tx}, {ty})"
        )
    return int(tx), int(ty)


def translate(img, tx: int, ty: int, mode: str = "circular") -> np.ndarray:
    """Translate right by `tx` and down by `ty` pixels.

    output[y, x] = img[y - ty, x - tx], with out-of-range source pixels
    wrapped around ("circular") or left at zero ("zero_fill").
    """
    arr = as_gray(img)
    height, width = arr.shape
    tx, ty = _check_offsets(tx, ty, width, height)
    if mode == "circular":
        return np.roll(arr, shift=(ty, tx), axis=(0, 1))
    if mode == "zero_fill":
        out = np.zeros_like(arr)
        out[ty:, tx:] = arr[: height - ty, : width - tx]
        return out
    raise ValueError(f"unknown translation mode {mode!r}")


def blend(base, overlay, alpha: float) -> np.ndarray:
    """Convex blend (1 - alpha) * base + alpha * overlay, alpha in [0, 1]."""
    a = as_gray(base)
    b = as_gray(overlay)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if not (isinstance(alpha, (int, float, np.floating)) and 0.0 <= alpha <= 1.0):
        raise ValueError(f"blend weight must lie in [0, 1], got {alpha!r}")
    return np.clip((1.0 - alpha) * a + alpha * b, 0.0, 1.0)


def gaussian_kernel_1d(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps over radius ceil(3 * sigma)."""
    if not (np.isfinite(sigma) and sigma > 0):
        raise ValueError(f"sigma must be positive, got {sigma!r}")
    radius = math.ceil(3.0 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    return kernel / kernel.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel radius ceil(3 * sigma), replicate borders."""
    arr = as_gray(img)
    kernel = gaussian_kernel_1d(sigma)
    radius = kernel.size // 2
    # Row pass then column pass over edge-padded copies; each output pixel
    # is a convex combination of inputs, so the range is preserved.
    padded = np.pad(arr, ((0, 0), (radius, radius)), mode="edge")
    out = np.zeros_like(arr)
    width = arr.shape[1]
    for k, w in enumerate(kernel):
        out += w * padded[:, k : k + width]
    padded = np.pad(out, ((radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(arr)
    height = arr.shape[0]
    for k, w in enumerate(kernel):
        out += w * padded[k : k + height, :]
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping square tiling anchored at the top-left corner.

    Patches are ordered row-major; leftover margins on the right/bottom
    (image size modulo patch size) are discarded.
    """

    patch_size: int
    rows: int
    cols: int

    @property
    def n_patches(self) -> int:
        return self.rows * self.cols

    def origin(self, index: int) -> tuple[int, int]:
        """(row, col) pixel origin of patch `index` in row-major order."""
        if not 0 <= index < self.n_patches:
            raise IndexError(f"patch index {index} out of range")
        r, c = divmod(index, self.cols)
        return r * self.patch_size, c * self.patch_size


def extract_patches(img, patch_size: int) -> tuple[PatchGrid, np.ndarray]:
    """Tile into non-overlapping patches; returns (grid, (n, size, size) array)."""
    arr = as_gray(img)
    if not (isinstance(patch_size, (int, np.integer)) and patch_size >= 1):
        raise ValueError(f"patch size must be a positive integer, got {patch_size!r}")
    height, width = arr.shape
    rows, cols = height // patch_size, width // patch_size
    if rows == 0 or cols == 0:
        raise ValueError(
            f"patch size {patch_size} exceeds image dimensions {width}x{height}"
        )
    grid = PatchGrid(patch_size=int(patch_size), rows=rows, cols=cols)
    trimmed = arr[: rows * patch_size, : cols * patch_size]
    patches = (
        trimmed.reshape(rows, patch_size, cols, patch_size)
        .swapaxes(1, 2)
        .reshape(rows * cols, patch_size, patch_size)
    )
    return grid, patches

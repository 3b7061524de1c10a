"""Ghost-artifact synthesis for segmented-mirror misalignment.

A mirror of N segments with k misaligned segments forms a secondary
"ghost" copy of the scene carrying intensity I = k/N, leaving the
primary at 1 - I.  Synthetically: translate a copy of the image by an
integer offset (tx, ty), then blend it back over the original with
weight I.  Offsets either come from a seeded uniform draw over
[0, 15]^2 ("random") or scale with the misalignment count
("proportional", tx = ty = round(15k/(N-1))), which ties ghost
separation to ghost intensity and makes the intensity classes far
easier to tell apart.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fourier import ifft2
from .image import as_gray, blend, translate

__all__ = [
    "MAX_OFFSET",
    "check_segments",
    "intensity_for",
    "offset_for",
    "GhostParams",
    "inject_ghost",
    "synth_ground_image",
]

MAX_OFFSET = 15
_OFFSET_MODES = ("random", "proportional")


def check_segments(n_segments: int) -> int:
    """Any N >= 2 is accepted; the reference experiments use {4, 6, 8}."""
    if not (isinstance(n_segments, (int, np.integer)) and n_segments >= 2):
        raise ValueError(f"segment count must be an integer >= 2, got {n_segments!r}")
    return int(n_segments)


def _check_k(k: int, n_segments: int) -> int:
    if not (isinstance(k, (int, np.integer)) and 0 <= k <= n_segments - 1):
        raise ValueError(
            f"misaligned count must be an integer in [0, {n_segments - 1}], got {k!r}"
        )
    return int(k)


def intensity_for(k: int, n_segments: int) -> float:
    """Ghost intensity k/N; 0 <= I <= 1 - 1/N."""
    n = check_segments(n_segments)
    return _check_k(k, n) / n


def offset_for(
    k: int, n_segments: int, mode: str = "random", rng: np.random.Generator | None = None
) -> tuple[int, int]:
    """Draw or derive the ghost offset (tx, ty) for k of N misaligned segments.

    "random" draws tx, ty independently and uniformly from [0, 15] (needs
    `rng`); "proportional" sets tx = ty = round(15k/(N-1)), half away from
    zero.  k = 0 always yields (0, 0): an aligned mirror casts no ghost.
    """
    n = check_segments(n_segments)
    k = _check_k(k, n)
    if mode not in _OFFSET_MODES:
        raise ValueError(f"offset mode must be one of {_OFFSET_MODES}, got {mode!r}")
    if k == 0:
        return (0, 0)
    if mode == "proportional":
        step = int(np.floor(MAX_OFFSET * k / (n - 1) + 0.5))
        return (step, step)
    if rng is None:
        raise ValueError("random offset mode needs an rng")
    tx, ty = rng.integers(0, MAX_OFFSET + 1, size=2)
    return (int(tx), int(ty))


@dataclass(frozen=True)
class GhostParams:
    """Fully determined ghost injection: segment counts, intensity, offset."""

    n_segments: int
    k_misaligned: int
    intensity: float
    tx: int
    ty: int
    offset_mode: str = "random"

    def __post_init__(self):
        n = check_segments(self.n_segments)
        k = _check_k(self.k_misaligned, n)
        if self.intensity != k / n:
            raise ValueError(
                f"intensity {self.intensity!r} does not equal k/N = {k}/{n}"
            )
        for name, val in (("tx", self.tx), ("ty", self.ty)):
            if not (isinstance(val, (int, np.integer)) and 0 <= val <= MAX_OFFSET):
                raise ValueError(f"{name} must be an integer in [0, {MAX_OFFSET}], got {val!r}")
        if k == 0 and (self.tx, self.ty) != (0, 0):
            raise ValueError("aligned mirrors (k = 0) must use offset (0, 0)")
        if self.offset_mode not in _OFFSET_MODES:
            raise ValueError(f"unknown offset mode {self.offset_mode!r}")

    @classmethod
    def draw(
        cls,
        k: int,
        n_segments: int,
        mode: str = "random",
        rng: np.random.Generator | None = None,
    ) -> "GhostParams":
        tx, ty = offset_for(k, n_segments, mode, rng)
        return cls(
            n_segments=int(n_segments),
            k_misaligned=int(k),
            intensity=intensity_for(k, n_segments),
            tx=tx,
            ty=ty,
            offset_mode=mode,
        )


def inject_ghost(img, params: GhostParams, translation_mode: str = "circular") -> np.ndarray:
    """Blend a translated self-copy over the image at the ghost intensity.

    Output = (1 - I) * img + I * translate(img, tx, ty).  k = 0 returns a
    pixel-exact copy.  Requires both image dimensions > 15 so the offset
    range always fits.
    """
    arr = as_gray(img)
    if min(arr.shape) <= MAX_OFFSET:
        raise ValueError(
            f"image dimensions must exceed {MAX_OFFSET} pixels, got {arr.shape}"
        )
    if params.k_misaligned == 0:
        return arr.copy()
    copy = translate(arr, params.tx, params.ty, mode=translation_mode)
    return blend(arr, copy, params.intensity)


def synth_ground_image(
    size: int, spectral_exponent: float = 1.5, seed: int = 0
) -> np.ndarray:
    """Procedural ground scene: 1/f^alpha random field rescaled to [0, 1].

    Spectral amplitudes are exactly (radial frequency)^-alpha with
    uniformly random phases, conjugate-symmetrized so the field is real,
    then affinely rescaled to full [0, 1] range.  Deterministic in
    (size, alpha, seed); the seed keys a Philox counter stream, so
    callers may generate samples in any order.
    """
    if not (isinstance(size, (int, np.integer)) and size >= 2):
        raise ValueError(f"size must be an integer >= 2, got {size!r}")
    if not (np.isfinite(spectral_exponent) and spectral_exponent >= 0):
        raise ValueError(f"spectral exponent must be >= 0, got {spectral_exponent!r}")
    size = int(size)
    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), 0]))

    # DFT bin frequencies in cycles/pixel: 0, 1/n, ..., wrapping negative
    freqs = ((np.arange(size) + size // 2) % size - size // 2) / size
    rho = np.hypot(freqs[:, None], freqs[None, :])
    with np.errstate(divide="ignore"):
        amplitude = np.where(rho > 0, rho, 1.0) ** -spectral_exponent
    amplitude[0, 0] = 0.0

    # Antisymmetric phase phi(-f) = -phi(f) keeps amplitudes untouched
    # while forcing conjugate symmetry; self-conjugate bins go real.
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(size, size))

    def negate_freq(a):
        return np.roll(a[::-1, ::-1], (1, 1), axis=(0, 1))

    idx = np.arange(size * size).reshape(size, size)
    idx_neg = negate_freq(idx)
    anti = np.where(idx < idx_neg, phase, -negate_freq(phase))
    anti[idx == idx_neg] = 0.0

    field = ifft2(amplitude * np.exp(1j * anti)).real
    lo, hi = field.min(), field.max()
    if hi - lo < 1e-12:
        return np.full((size, size), 0.5)
    return (field - lo) / (hi - lo)

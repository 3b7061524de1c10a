"""Binary netpbm codec: 8-bit PGM ("P5") grayscale and PPM ("P6") RGB.

Only maxval 255 is supported.  Grayscale intensity i in [0, 1] maps to
byte round(i * 255) on write and byte b maps back to b / 255 on read,
so write/read round-trips are stable after one quantization.
"""

from __future__ import annotations

import numpy as np

__all__ = ["read_pgm", "write_pgm", "read_ppm", "write_ppm", "NetpbmError"]


class NetpbmError(ValueError):
    """Malformed or unsupported netpbm data."""


def _read_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """Pull `count` whitespace-separated integer tokens from a header.

    Netpbm headers allow '#' comments running to end of line anywhere
    whitespace may appear.  Returns the tokens and the offset of the
    first raster byte (one whitespace char past the last token).
    """
    tokens: list[int] = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos] == ord("#"):
            while pos < n and data[pos] != ord("\n"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise NetpbmError("truncated netpbm header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError:
            raise NetpbmError(
                f"bad header token {data[start:pos]!r} at byte {start}"
            ) from None
    if pos >= n or not data[pos : pos + 1].isspace():
        raise NetpbmError("missing whitespace after netpbm header")
    return tokens, pos + 1


def _read_raster(path, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != magic:
        raise NetpbmError(
            f"{path}: expected {magic.decode()} magic, got {data[:2]!r}"
        )
    (width, height, maxval), offset = _read_tokens(data[2:], 3)
    offset += 2
    if width <= 0 or height <= 0:
        raise NetpbmError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise NetpbmError(f"{path}: only maxval 255 supported, got {maxval}")
    expected = width * height * channels
    raster = data[offset : offset + expected]
    if len(raster) != expected:
        raise NetpbmError(
            f"{path}: raster has {len(raster)} bytes, expected {expected}"
        )
    img = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return img.reshape(height, width)
    return img.reshape(height, width, channels)


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM file into a float64 (height, width) array in [0, 1]."""
    return _read_raster(path, b"P5", 1)


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM file into a float64 (height, width, 3) array in [0, 1]."""
    return _read_raster(path, b"P6", 3)


def _quantize(img: np.ndarray) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("image intensities must lie in [0, 1]")
    return np.rint(arr * 255.0).astype(np.uint8)


def write_pgm(img: np.ndarray, path) -> None:
    """Write a 2D array of intensities in [0, 1] as binary PGM, maxval 255."""
    arr = _quantize(img)
    if arr.ndim != 2:
        raise ValueError(f"PGM needs a 2D image, got shape {arr.shape}")
    height, width = arr.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (width, height))
        fh.write(arr.tobytes())


def write_ppm(img: np.ndarray, path) -> None:
    """Write a (height, width, 3) array of intensities in [0, 1] as binary PPM."""
    arr = _quantize(img)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM needs a (height, width, 3) image, got shape {arr.shape}")
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (width, height))
        fh.write(arr.tobytes())

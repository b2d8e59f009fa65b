"""Dense 2D field types, mask I/O, and exact L1 distance transforms.

Arrays are row-major with (row, col) indexing throughout the package. A
binary mask is a uint8 array of {0, 1}; a scalar field is a float64 array.
"""

from __future__ import annotations

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "ShapeMismatchError",
    "MaskLoadError",
    "UnreadableImageError",
    "UnsupportedDepthError",
    "ColorImageError",
    "FieldRangeError",
    "as_mask",
    "as_field",
    "check_same_shape",
    "distance_sentinel",
    "distance_transform_l1",
    "inner_distance",
    "load_mask",
    "load_field",
    "save_field",
]


class ShapeMismatchError(ValueError):
    """Two operands that must share a shape do not."""


class MaskLoadError(Exception):
    """Base class for mask-loading failures."""


class UnreadableImageError(MaskLoadError):
    """The file is missing or not a decodable image."""


class UnsupportedDepthError(MaskLoadError):
    """The image is grayscale but not 8-bit."""


class ColorImageError(MaskLoadError):
    """The image has color channels; only grayscale is accepted."""


class FieldRangeError(ValueError):
    """A field destined for an 8-bit image has values outside [0, 1]."""


def as_mask(data) -> np.ndarray:
    """Validate ``data`` as an H x W binary mask and return it as uint8."""
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"mask must be a 2D array with positive extents, got shape {arr.shape}")
    if arr.dtype == bool:
        return arr.astype(np.uint8)
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8, copy=False)


def as_field(data) -> np.ndarray:
    """Validate ``data`` as an H x W real-valued field and return it as float64."""
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"field must be a 2D array with positive extents, got shape {arr.shape}")
    return arr


def check_same_shape(a, b) -> None:
    if np.shape(a) != np.shape(b):
        raise ShapeMismatchError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def distance_sentinel(shape) -> float:
    """Finite stand-in for an unreachable distance: height + width.

    Strictly larger than any attainable in-grid L1 distance, so Gaussian
    weights of it underflow to ~0 while arithmetic stays finite.
    """
    return float(shape[0] + shape[1])


def distance_transform_l1(mask) -> np.ndarray:
    """Exact L1 (Manhattan) distance to the nearest 1-pixel of ``mask``.

    Two-pass chamfer scan: a raster pass propagating from the top/left
    neighbours followed by an anti-raster pass from the bottom/right, which
    is exact for the L1 metric. An all-zero mask yields a constant field at
    the ``distance_sentinel`` value.
    """
    m = as_mask(mask)
    h, w = m.shape
    inf = distance_sentinel(m.shape)
    d = np.where(m == 1, 0.0, inf)
    ramp = np.arange(w, dtype=np.float64)
    # In-row propagation d[x] = min(d[x], d[x-1] + 1) unrolls to
    # ramp[x] + cummin(d - ramp)[x]; same trick right-to-left with d + ramp.
    for y in range(h):
        if y:
            np.minimum(d[y], d[y - 1] + 1.0, out=d[y])
        np.minimum(d[y], np.minimum.accumulate(d[y] - ramp) + ramp, out=d[y])
    for y in range(h - 1, -1, -1):
        if y < h - 1:
            np.minimum(d[y], d[y + 1] + 1.0, out=d[y])
        suffix = np.minimum.accumulate((d[y] + ramp)[::-1])[::-1]
        np.minimum(d[y], suffix - ramp, out=d[y])
    return d


def inner_distance(mask) -> np.ndarray:
    """L1 distance to the nearest 0-pixel; encodes the local half-width.

    Equals ``distance_transform_l1`` of the complement, so an all-ones mask
    yields the sentinel field.
    """
    m = as_mask(mask)
    return distance_transform_l1(1 - m)


_COLOR_MODES = ("RGB", "RGBA", "P", "CMYK", "YCbCr", "LA", "PA", "HSV")


def _load_gray_bytes(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG/PGM as raw bytes, rejecting everything else."""
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            data = np.asarray(img, dtype=np.uint8) if mode == "L" else None
    except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
        raise UnreadableImageError(f"cannot read image {path!s}: {exc}") from exc
    if mode in _COLOR_MODES:
        raise ColorImageError(f"{path!s}: color images are not supported (mode {mode})")
    if mode != "L":
        raise UnsupportedDepthError(f"{path!s}: only 8-bit grayscale is supported (mode {mode})")
    return data


def load_mask(path, threshold: int = 128) -> np.ndarray:
    """Load an 8-bit grayscale PNG or PGM and binarize at ``threshold``.

    Pixels >= threshold map to 1. Raises ``UnreadableImageError``,
    ``UnsupportedDepthError``, or ``ColorImageError`` for the three
    rejection cases.
    """
    if not 0 <= int(threshold) <= 255:
        raise ValueError(f"threshold must be a byte value, got {threshold}")
    return (_load_gray_bytes(path) >= threshold).astype(np.uint8)


def load_field(path) -> np.ndarray:
    """Load an 8-bit grayscale image as a [0, 1] scalar field (byte / 255)."""
    return _load_gray_bytes(path).astype(np.float64) / 255.0


def save_field(field, path) -> None:
    """Write a [0, 1] field as an 8-bit grayscale PNG.

    Quantization is round-half-up (value v -> floor(255 v + 0.5)) so that
    binary masks round-trip bit-exactly. Out-of-range values raise
    ``FieldRangeError`` rather than being clamped.
    """
    f = as_field(field)
    if f.min() < 0.0 or f.max() > 1.0:
        raise FieldRangeError(
            f"field values must lie in [0, 1] to be saved, got [{f.min()}, {f.max()}]"
        )
    data = np.floor(f * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")

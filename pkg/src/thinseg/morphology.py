"""Soft morphology kernels: dilation, erosion, skeletons, and halo diffusion.

The structuring element everywhere is the discrete L1 ball (the square
window with its corners cut away), matching the Manhattan distance used by
the rest of the package. Differentiable variants operate on tape values;
the binary specializations used by metrics and deformations run on plain
arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .grid import as_field, as_mask

__all__ = [
    "DiffusionConfig",
    "SkeletonConfig",
    "soft_dilate",
    "soft_erode",
    "soft_open",
    "soft_skeleton",
    "smooth_diffuse",
    "hard_skeleton",
    "decrease_dilate",
]


@dataclass(frozen=True)
class DiffusionConfig:
    """Halo diffusion parameters: halo size, iteration cap, decay factor."""

    s_border: int = 20
    n_iter_max: int = 50
    f: float = 0.82

    def __post_init__(self):
        if self.s_border < 1:
            raise ValueError(f"s_border must be >= 1, got {self.s_border}")
        if self.n_iter_max < 1:
            raise ValueError(f"n_iter_max must be >= 1, got {self.n_iter_max}")
        if not 0.0 < self.f < 1.0:
            raise ValueError(f"decay factor f must lie in (0, 1), got {self.f}")


@dataclass(frozen=True)
class SkeletonConfig:
    """Number of thinning rounds; must exceed half the thickest structure."""

    iterations: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")


def soft_dilate(field: ad.DiffValue, d: int = 1) -> ad.DiffValue:
    """Maxpool over the L1 ball of radius ``d``, clipped to the grid."""
    return ad.maxpool(field, d)


def soft_erode(field: ad.DiffValue, d: int = 1) -> ad.DiffValue:
    """Minpool over the L1 ball of radius ``d``; dual of ``soft_dilate``."""
    return ad.minpool(field, d)


def soft_open(field: ad.DiffValue, d: int = 1) -> ad.DiffValue:
    return soft_dilate(soft_erode(field, d), d)


def soft_skeleton(field: ad.DiffValue, cfg: SkeletonConfig = SkeletonConfig()) -> ad.DiffValue:
    """Differentiable thinning by iterated opening residues.

    Each round accumulates relu(field - opened) into the skeleton via a
    fuzzy union, then erodes the working field. On a binary input the
    result is binary and its support approximates the medial axis.
    """
    img = field
    skel = None
    for _ in range(cfg.iterations):
        opened = soft_open(img)
        delta = ad.relu(img - opened)
        if skel is None:
            skel = delta
        else:
            skel = skel + ad.relu(delta - skel * delta)
        img = soft_erode(img)
    return skel


def smooth_diffuse(field: ad.DiffValue, cfg: DiffusionConfig = DiffusionConfig()) -> ad.DiffValue:
    """Blend-dilate a [0, 1] field into a halo that decays away from its support.

    Per-iteration radius is max(1, s_border // n_iter_max); enough
    iterations run (capped at n_iter_max) for the halo to reach s_border
    pixels. Support pixels keep their value exactly: the update is written
    as cur + (1 - f) * (dilated - cur), which is zero wherever dilation
    does not grow the field.
    """
    s_dilate = max(1, cfg.s_border // cfg.n_iter_max)
    steps = min(cfg.n_iter_max, math.ceil(cfg.s_border / s_dilate))
    blend = 1.0 - cfg.f
    cur = field
    for _ in range(steps):
        grown = soft_dilate(cur, s_dilate)
        cur = cur + blend * (grown - cur)
    return cur


_PLUS_OFFSETS = ((-1, 0), (0, -1), (0, 1), (1, 0))


def _shift_slices(shape, dy: int, dx: int):
    h, w = shape
    target = (slice(max(0, -dy), h - max(0, dy)), slice(max(0, -dx), w - max(0, dx)))
    source = (slice(max(0, dy), h - max(0, -dy)), slice(max(0, dx), w - max(0, -dx)))
    return target, source


def _binary_dilate(img: np.ndarray) -> np.ndarray:
    out = img.copy()
    for dy, dx in _PLUS_OFFSETS:
        target, source = _shift_slices(img.shape, dy, dx)
        out[target] |= img[source]
    return out


def _binary_erode(img: np.ndarray) -> np.ndarray:
    # Window cells outside the grid are ignored, matching the clipped pools.
    out = img.copy()
    for dy, dx in _PLUS_OFFSETS:
        target, source = _shift_slices(img.shape, dy, dx)
        out[target] &= img[source]
    return out


def hard_skeleton(mask) -> np.ndarray:
    """Binary medial-axis thinning: the binary specialization of ``soft_skeleton``.

    Iterates opening residues until erosion reaches a fixpoint (an empty
    working image for any mask with a boundary), so no iteration count is
    needed. Deterministic; the skeleton is nonempty iff the mask is.
    """
    img = as_mask(mask).astype(bool)
    skel = np.zeros_like(img)
    while True:
        eroded = _binary_erode(img)
        opened = _binary_dilate(eroded)
        skel |= img & ~opened
        if np.array_equal(eroded, img):
            return skel.astype(np.uint8)
        img = eroded


def _field_maxpool_plus(field: np.ndarray) -> np.ndarray:
    out = field.copy()
    for dy, dx in _PLUS_OFFSETS:
        target, source = _shift_slices(field.shape, dy, dx)
        np.maximum(out[target], field[source], out=out[target])
    return out


def decrease_dilate(field) -> np.ndarray:
    """Grow each positive seed pixel into an L1 diamond with per-ring decrement.

    Iterates to a fixpoint: pool with the corner-cut 3x3 kernel, then pixels
    that were 0 before pooling receive max(pooled - 1, 0) while already
    positive pixels keep their value. A seed of value x therefore reaches
    L1 radius x - 1 (a value-1 seed stays a single pixel).
    """
    cur = as_field(field).copy()
    if (cur < 0).any():
        raise ValueError("decrease_dilate requires a non-negative field")
    while True:
        pooled = _field_maxpool_plus(cur)
        nxt = np.where(cur == 0.0, np.maximum(pooled - 1.0, 0.0), cur)
        if np.array_equal(nxt, cur):
            return cur
        cur = nxt

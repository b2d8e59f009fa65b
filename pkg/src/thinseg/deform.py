"""Procedural label degradations for studying robustness to poor annotation.

Three generators act on binary labels: an integer shift, a Perlin-modulated
width change that rebuilds each structure from its skeleton with noisy
half-widths, and a branch cutter that deletes skeleton pixels with a
probability that grows as the local structure gets thinner. Everything is
deterministic given the config seed.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .grid import as_mask, inner_distance
from .morphology import decrease_dilate, hard_skeleton

__all__ = [
    "PerlinConfig",
    "DeformConfig",
    "DEFORM_KINDS",
    "perlin_field",
    "shift_by",
    "deform_shift",
    "deform_width",
    "deform_branch_cut",
    "deform_combined",
    "deform_combined_detailed",
    "apply_deform",
]

DEFORM_KINDS = ("shift", "width", "branch", "combined")


@dataclass(frozen=True)
class PerlinConfig:
    """Multi-octave gradient-noise parameters.

    ``resolution`` is the number of lattice cells per axis at the base
    octave; each further octave multiplies it by ``lacunarity`` and scales
    its contribution by ``persistence``. The summed field is min-max
    rescaled onto the ``amplitude`` range.
    """

    amplitude: tuple[float, float] = (0.1, 2.0)
    resolution: int = 3
    octaves: int = 4
    persistence: float = 0.5
    lacunarity: float = 3.0
    seed: int = 0

    def __post_init__(self):
        low, high = self.amplitude
        if low >= high:
            raise ValueError(f"degenerate amplitude range [{low}, {high}]")
        if self.resolution < 1 or self.octaves < 1:
            raise ValueError("resolution and octaves must be >= 1")


@dataclass(frozen=True)
class DeformConfig:
    """Parameters for one deformation run; ``seed`` makes it reproducible."""

    kind: str = "combined"
    shift_max: int = 10
    alpha: float = 0.2
    p: float = 0.35
    apply_prob: float = 0.75
    epsilon: float = 1e-3
    perlin: PerlinConfig = PerlinConfig()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DEFORM_KINDS:
            raise ValueError(f"unknown deformation kind {self.kind!r}; expected one of {DEFORM_KINDS}")
        if self.shift_max < 0:
            raise ValueError(f"shift_max must be >= 0, got {self.shift_max}")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise ValueError(f"apply_prob must lie in [0, 1], got {self.apply_prob}")


def _fade(t: np.ndarray) -> np.ndarray:
    # Perlin's quintic easing 6t^5 - 15t^4 + 10t^3.
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def _gradient_octave(shape, cells: float, rng: np.random.Generator) -> np.ndarray:
    """One octave of 2D gradient-lattice noise with ``cells`` lattice cells per axis."""
    h, w = shape
    nodes = int(np.ceil(cells)) + 1
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(nodes + 1, nodes + 1))
    gy = np.sin(theta)
    gx = np.cos(theta)
    # Pixel centers in lattice units; +0.5 keeps them off the lattice lines.
    y = (np.arange(h) + 0.5) * (cells / h)
    x = (np.arange(w) + 0.5) * (cells / w)
    i0 = np.floor(y).astype(np.int64)
    j0 = np.floor(x).astype(np.int64)
    fy = (y - i0)[:, None]
    fx = (x - j0)[None, :]
    ii = np.ix_(i0, j0)
    ii10 = np.ix_(i0, j0 + 1)
    ii01 = np.ix_(i0 + 1, j0)
    ii11 = np.ix_(i0 + 1, j0 + 1)
    n00 = gx[ii] * fx + gy[ii] * fy
    n10 = gx[ii10] * (fx - 1.0) + gy[ii10] * fy
    n01 = gx[ii01] * fx + gy[ii01] * (fy - 1.0)
    n11 = gx[ii11] * (fx - 1.0) + gy[ii11] * (fy - 1.0)
    u = _fade(np.broadcast_to(fx, shape))
    v = _fade(np.broadcast_to(fy, shape))
    top = n00 + u * (n10 - n00)
    bottom = n01 + u * (n11 - n01)
    return top + v * (bottom - top)


def perlin_field(shape, cfg: PerlinConfig = PerlinConfig()) -> np.ndarray:
    """Multi-octave gradient noise rescaled onto the configured amplitude range."""
    h, w = shape
    if h < 1 or w < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    rng = np.random.default_rng(cfg.seed)
    total = np.zeros((h, w), dtype=np.float64)
    amplitude = 1.0
    cells = float(cfg.resolution)
    for _ in range(cfg.octaves):
        total += amplitude * _gradient_octave((h, w), cells, rng)
        amplitude *= cfg.persistence
        cells *= cfg.lacunarity
    low, high = cfg.amplitude
    span = total.max() - total.min()
    if span == 0.0:
        return np.full((h, w), 0.5 * (low + high))
    return low + (total - total.min()) * (high - low) / span


def shift_by(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer translation; pixels shifted out are dropped, vacated pixels are 0."""
    m = as_mask(mask)
    h, w = m.shape
    out = np.zeros_like(m)
    ty = slice(max(0, dy), h + min(0, dy))
    tx = slice(max(0, dx), w + min(0, dx))
    sy = slice(max(0, -dy), h - max(0, dy))
    sx = slice(max(0, -dx), w - max(0, dx))
    out[ty, tx] = m[sy, sx]
    return out


def deform_shift(label, cfg: DeformConfig) -> np.ndarray:
    """Translate the label by a seeded uniform draw from [-shift_max, shift_max]^2."""
    m = as_mask(label)
    rng = np.random.default_rng(cfg.seed)
    dx, dy = rng.integers(-cfg.shift_max, cfg.shift_max + 1, size=2)
    return shift_by(m, int(dy), int(dx))


def _perlin_for(cfg: DeformConfig, shape, rng: np.random.Generator) -> np.ndarray:
    noise_seed = int(rng.integers(0, 2**63))
    return perlin_field(shape, dataclasses.replace(cfg.perlin, seed=noise_seed))


def deform_width(label, cfg: DeformConfig) -> np.ndarray:
    """Rebuild each structure from its skeleton with Perlin-scaled half-widths.

    The skeleton itself is preserved (nothing is created or removed); only
    the width profile changes, by the decreasing dilation of
    inner-distance x skeleton x noise.
    """
    m = as_mask(label)
    if not m.any():
        return np.zeros_like(m)
    skel = hard_skeleton(m).astype(np.float64)
    half_width = inner_distance(m)
    rng = np.random.default_rng(cfg.seed)
    noise = _perlin_for(cfg, m.shape, rng)
    rebuilt = decrease_dilate(half_width * skel * noise)
    return (rebuilt > 0).astype(np.uint8)


def deform_branch_cut(label, cfg: DeformConfig) -> np.ndarray:
    """Delete skeleton pixels with probability rising as structures get thinner.

    The cut score is noise * (mean half-width / (eps + half-width))^alpha; a
    skeleton pixel is zeroed wherever the score exceeds 1 - p. The mask is
    then rebuilt from the surviving skeleton-distance field exactly as the
    width deformation does.
    """
    m = as_mask(label)
    if not m.any():
        return np.zeros_like(m)
    skel = hard_skeleton(m).astype(np.float64)
    half_width = inner_distance(m)
    rng = np.random.default_rng(cfg.seed)
    noise = _perlin_for(cfg, m.shape, rng)
    mean_half_width = float((skel * half_width).sum() / skel.sum())
    cut_score = noise * (mean_half_width / (cfg.epsilon + half_width)) ** cfg.alpha
    seeded = half_width * skel
    seeded[cut_score > 1.0 - cfg.p] = 0.0
    rebuilt = decrease_dilate(seeded)
    return (rebuilt > 0).astype(np.uint8)


def deform_combined_detailed(label, cfg: DeformConfig) -> tuple[np.ndarray, dict]:
    """Apply shift, width, branch in order, each firing with ``apply_prob``.

    Stage sub-seeds are drawn before the firing coin flips, so which stages
    fire never changes what a firing stage does; at apply_prob = 1 the
    result equals the plain three-way composition with the same sub-seeds.
    Returns the mask plus an info dict recording sub-seeds and firings.
    """
    m = as_mask(label)
    rng = np.random.default_rng(cfg.seed)
    sub_seeds = [int(s) for s in rng.integers(0, 2**63, size=3)]
    fires = [bool(v) for v in rng.random(size=3) < cfg.apply_prob]
    stages = (
        ("shift", deform_shift),
        ("width", deform_width),
        ("branch", deform_branch_cut),
    )
    out = m
    for (name, fn), seed, fired in zip(stages, sub_seeds, fires):
        if fired:
            out = fn(out, dataclasses.replace(cfg, seed=seed))
    info = {
        "sub_seeds": {name: seed for (name, _), seed in zip(stages, sub_seeds)},
        "applied": {name: fired for (name, _), fired in zip(stages, fires)},
    }
    return out, info


def deform_combined(label, cfg: DeformConfig) -> np.ndarray:
    return deform_combined_detailed(label, cfg)[0]


def apply_deform(label, cfg: DeformConfig) -> np.ndarray:
    """Dispatch on ``cfg.kind``."""
    if cfg.kind == "shift":
        return deform_shift(label, cfg)
    if cfg.kind == "width":
        return deform_width(label, cfg)
    if cfg.kind == "branch":
        return deform_branch_cut(label, cfg)
    return deform_combined(label, cfg)

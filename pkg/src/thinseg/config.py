"""Flat key = value config files shared by every CLI subcommand.

Keys mirror the config dataclass field names (sigma, s_border, f,
sharpness, alpha, p, ...). Precedence is defaults < config file < command
line flags. The THINSEG_CONFIG environment variable names a default config
file used when --config is not given.
"""

from __future__ import annotations

import dataclasses
import os

from .deform import DeformConfig, PerlinConfig
from .losses import LossConfig
from .metrics import MetricConfig
from .morphology import DiffusionConfig, SkeletonConfig

__all__ = [
    "ENV_CONFIG",
    "read_config_file",
    "resolve_entries",
    "build_metric_config",
    "build_loss_config",
    "build_deform_config",
    "build_diffusion_config",
    "build_skeleton_config",
]

ENV_CONFIG = "THINSEG_CONFIG"


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blank lines skipped."""
    entries: dict[str, str] = {}
    with open(path) as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            entries[key.strip()] = value.strip()
    return entries


def resolve_entries(config_flag) -> dict[str, str]:
    """Entries from --config, else from $THINSEG_CONFIG, else empty."""
    path = config_flag or os.environ.get(ENV_CONFIG)
    if not path:
        return {}
    return read_config_file(path)


def _pick(entries: dict, overrides: dict, key: str, cast, default):
    if overrides.get(key) is not None:
        return overrides[key]
    if key in entries:
        return cast(entries[key])
    return default


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _weights(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def build_metric_config(entries: dict, **overrides) -> MetricConfig:
    base = MetricConfig()
    return MetricConfig(
        sigma=_pick(entries, overrides, "sigma", float, base.sigma),
        epsilon=_pick(entries, overrides, "epsilon", float, base.epsilon),
        combined_weights=tuple(_pick(entries, overrides, "combined_weights", _weights,
                                     base.combined_weights)),
        normalize_combined=_pick(entries, overrides, "normalize_combined", _bool,
                                 base.normalize_combined),
    )


def build_loss_config(entries: dict, **overrides) -> LossConfig:
    base = LossConfig()
    return LossConfig(
        s_border=_pick(entries, overrides, "s_border", int, base.s_border),
        n_iter_max=_pick(entries, overrides, "n_iter_max", int, base.n_iter_max),
        f=_pick(entries, overrides, "f", float, base.f),
        sharpness=_pick(entries, overrides, "sharpness", float, base.sharpness),
        epsilon=_pick(entries, overrides, "epsilon", float, base.epsilon),
        skeleton_iterations=_pick(entries, overrides, "skeleton_iterations", int,
                                  base.skeleton_iterations),
        mix_dice_weight=_pick(entries, overrides, "mix_dice_weight", float, base.mix_dice_weight),
        mix_studied_weight=_pick(entries, overrides, "mix_studied_weight", float,
                                 base.mix_studied_weight),
    )


def build_diffusion_config(entries: dict, **overrides) -> DiffusionConfig:
    base = DiffusionConfig()
    return DiffusionConfig(
        s_border=_pick(entries, overrides, "s_border", int, base.s_border),
        n_iter_max=_pick(entries, overrides, "n_iter_max", int, base.n_iter_max),
        f=_pick(entries, overrides, "f", float, base.f),
    )


def build_skeleton_config(entries: dict, **overrides) -> SkeletonConfig:
    base = SkeletonConfig()
    return SkeletonConfig(
        iterations=_pick(entries, overrides, "skeleton_iterations", int, base.iterations),
    )


def build_perlin_config(entries: dict, seed: int | None = None) -> PerlinConfig:
    base = PerlinConfig()
    low = _pick(entries, {}, "amplitude_low", float, base.amplitude[0])
    high = _pick(entries, {}, "amplitude_high", float, base.amplitude[1])
    return PerlinConfig(
        amplitude=(low, high),
        resolution=_pick(entries, {}, "resolution", int, base.resolution),
        octaves=_pick(entries, {}, "octaves", int, base.octaves),
        persistence=_pick(entries, {}, "persistence", float, base.persistence),
        lacunarity=_pick(entries, {}, "lacunarity", float, base.lacunarity),
        seed=base.seed if seed is None else seed,
    )


def build_deform_config(entries: dict, **overrides) -> DeformConfig:
    base = DeformConfig()
    return DeformConfig(
        kind=_pick(entries, overrides, "kind", str, base.kind),
        shift_max=_pick(entries, overrides, "shift_max", int, base.shift_max),
        alpha=_pick(entries, overrides, "alpha", float, base.alpha),
        p=_pick(entries, overrides, "p", float, base.p),
        apply_prob=_pick(entries, overrides, "apply_prob", float, base.apply_prob),
        epsilon=_pick(entries, overrides, "epsilon", float, base.epsilon),
        perlin=build_perlin_config(entries),
        seed=_pick(entries, overrides, "seed", int, base.seed),
    )


def snapshot(config) -> dict:
    """JSON-serializable view of a config dataclass for run manifests."""
    return dataclasses.asdict(config)

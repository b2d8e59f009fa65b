"""Evaluation metrics for thin-structure segmentation.

Alongside plain Dice/IoU, the line-accuracy family scores how well two
binary structures agree in centerline position, length, and width, which
pixel-overlap metrics cannot separate. All metrics consume hardened
(binary) predictions; skeletons are extracted with deterministic binary
thinning.

Empty-mask conventions: when both sides are empty every metric is 1; when
exactly one side is empty, dice/iou/position are 0 and the epsilon-guarded
ratio formulas are evaluated verbatim.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .grid import as_mask, check_same_shape, distance_transform_l1
from .morphology import hard_skeleton

__all__ = [
    "MetricConfig",
    "PairScores",
    "MetricReport",
    "METRIC_FIELDS",
    "dice",
    "iou",
    "lineacc_pos",
    "lineacc_length",
    "lineacc_width",
    "lineacc_combined",
    "evaluate_pair",
    "evaluate_dirs",
    "NoPairsError",
]

METRIC_FIELDS = ("iou", "dice", "lineacc_pos", "lineacc_width", "lineacc_length", "lineacc_combined")


@dataclass(frozen=True)
class MetricConfig:
    """Gaussian scale, ratio guard, and combined-score weighting.

    ``combined_weights`` orders as (pos, width, length, dice, iou); the
    weighted sum is divided by the weight total when ``normalize_combined``
    is set so that the combined score stays comparable to its constituents.
    """

    sigma: float = 10.0
    epsilon: float = 1e-3
    combined_weights: tuple[float, float, float, float, float] = (2.0, 0.5, 0.5, 0.5, 0.5)
    normalize_combined: bool = True

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if len(self.combined_weights) != 5:
            raise ValueError("combined_weights needs exactly five entries")


class NoPairsError(ValueError):
    """No prediction/label file pairs could be formed."""


def dice(pred, label) -> float:
    """2|P n L| / (|P| + |L|); 1.0 when both masks are empty."""
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    sp = int(p.sum())
    sl = int(l.sum())
    if sp == 0 and sl == 0:
        return 1.0
    inter = int((p & l).sum())
    return 2.0 * inter / (sp + sl)


def iou(pred, label) -> float:
    """|P n L| / |P u L|; 1.0 when both masks are empty."""
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    union = int((p | l).sum())
    if union == 0:
        return 1.0
    inter = int((p & l).sum())
    return inter / union


def _gaussian_closeness(skel_from: np.ndarray, skel_to: np.ndarray, sigma: float) -> float:
    """Mean over skel_from pixels of exp(-d(skel_to)^2 / 2 sigma^2)."""
    dist = distance_transform_l1(skel_to)
    weights = np.exp(-(dist * dist) / (2.0 * sigma * sigma))
    return float((skel_from * weights).sum() / skel_from.sum())


def _pos_from_skeletons(sp: np.ndarray, sl: np.ndarray, sigma: float) -> float:
    np_, nl = int(sp.sum()), int(sl.sum())
    if np_ == 0 and nl == 0:
        return 1.0
    if np_ == 0 or nl == 0:
        return 0.0
    return _gaussian_closeness(sp, sl, sigma) * _gaussian_closeness(sl, sp, sigma)


def lineacc_pos(pred, label, cfg: MetricConfig = MetricConfig()) -> float:
    """Centerline proximity: product of Gaussian-weighted skeleton closeness terms.

    Width-independent by construction: only the skeletons of the two masks
    enter, each weighted by the L1 distance to the other skeleton.
    """
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    return _pos_from_skeletons(hard_skeleton(p), hard_skeleton(l), cfg.sigma)


def _length_from_counts(np_: int, nl: int, eps: float) -> float:
    return math.exp(-abs((np_ + eps) / (nl + eps) - 1.0))


def lineacc_length(pred, label, cfg: MetricConfig = MetricConfig()) -> float:
    """exp(-|ratio - 1|) of the two skeleton pixel counts (epsilon-guarded)."""
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    return _length_from_counts(int(hard_skeleton(p).sum()), int(hard_skeleton(l).sum()), cfg.epsilon)


def _width_from_counts(mask_p: int, mask_l: int, skel_p: int, skel_l: int, eps: float) -> float:
    # Mask-area ratio balanced by the inverse skeleton-length ratio, so a
    # longer prediction is not mistaken for a wider one.
    return math.exp(-abs((mask_l * skel_p + eps) / (mask_p * skel_l + eps) - 1.0))


def lineacc_width(pred, label, cfg: MetricConfig = MetricConfig()) -> float:
    """exp(-|ratio - 1|) of skeleton-balanced mask areas (epsilon-guarded)."""
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    return _width_from_counts(
        int(p.sum()), int(l.sum()),
        int(hard_skeleton(p).sum()), int(hard_skeleton(l).sum()),
        cfg.epsilon,
    )


def _combine(scores: "PairScores", cfg: MetricConfig) -> float:
    w = cfg.combined_weights
    total = (
        w[0] * scores.lineacc_pos
        + w[1] * scores.lineacc_width
        + w[2] * scores.lineacc_length
        + w[3] * scores.dice
        + w[4] * scores.iou
    )
    if cfg.normalize_combined:
        total /= sum(w)
    return total


def lineacc_combined(pred, label, cfg: MetricConfig = MetricConfig()) -> float:
    """Weighted blend of position/width/length/dice/iou (normalized by default)."""
    return evaluate_pair(pred, label, cfg).lineacc_combined


@dataclass(frozen=True)
class PairScores:
    """All per-image scores for one prediction/label pair."""

    iou: float
    dice: float
    lineacc_pos: float
    lineacc_width: float
    lineacc_length: float
    lineacc_combined: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_FIELDS}


def evaluate_pair(pred, label, cfg: MetricConfig = MetricConfig()) -> PairScores:
    """Score one pair, sharing the skeleton extraction across the metrics."""
    p = as_mask(pred)
    l = as_mask(label)
    check_same_shape(p, l)
    sp = hard_skeleton(p)
    sl = hard_skeleton(l)
    nsp, nsl = int(sp.sum()), int(sl.sum())
    partial = PairScores(
        iou=iou(p, l),
        dice=dice(p, l),
        lineacc_pos=_pos_from_skeletons(sp, sl, cfg.sigma),
        lineacc_width=_width_from_counts(int(p.sum()), int(l.sum()), nsp, nsl, cfg.epsilon),
        lineacc_length=_length_from_counts(nsp, nsl, cfg.epsilon),
        lineacc_combined=0.0,
    )
    return PairScores(**{**partial.as_dict(), "lineacc_combined": _combine(partial, cfg)})


@dataclass
class MetricReport:
    """Per-image rows plus mean / standard-error aggregates.

    ``failures`` lists (file, reason) for pairs that could not be scored;
    a report with failures maps to a nonzero exit in the CLI.
    """

    rows: list[tuple[str, PairScores]] = field(default_factory=list)
    failures: list[tuple[str, str]] = field(default_factory=list)

    def _column(self, name: str) -> np.ndarray:
        return np.array([getattr(scores, name) for _, scores in self.rows], dtype=np.float64)

    def mean(self) -> dict[str, float]:
        return {name: float(self._column(name).mean()) for name in METRIC_FIELDS}

    def stderr(self) -> dict[str, float]:
        out = {}
        n = len(self.rows)
        for name in METRIC_FIELDS:
            col = self._column(name)
            out[name] = float(col.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(("file",) + METRIC_FIELDS)
            for name, scores in self.rows:
                writer.writerow([name] + [repr(getattr(scores, f)) for f in METRIC_FIELDS])
            mean, stderr = self.mean(), self.stderr()
            writer.writerow(["MEAN"] + [repr(mean[f]) for f in METRIC_FIELDS])
            writer.writerow(["STDERR"] + [repr(stderr[f]) for f in METRIC_FIELDS])

    def write_json(self, path) -> None:
        payload = {
            "images": [{"file": name, **scores.as_dict()} for name, scores in self.rows],
            "aggregate": {"mean": self.mean(), "stderr": self.stderr()},
            "failures": [{"file": name, "error": reason} for name, reason in self.failures],
        }
        with open(path, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")


def _stem_index(directory: Path) -> dict[str, Path]:
    index: dict[str, Path] = {}
    for entry in sorted(directory.iterdir()):
        if entry.is_file() and entry.suffix.lower() in (".png", ".pgm"):
            index[entry.stem] = entry
    return index


def evaluate_dirs(pred_dir, label_dir, cfg: MetricConfig = MetricConfig(),
                  threshold: int = 128, loader=None) -> MetricReport:
    """Score every stem-matched pair between two directories.

    Rows are ordered by filename. Unmatched stems and per-pair failures
    (unreadable files, shape mismatches) are reported by name in
    ``failures``; only a complete absence of pairs raises.
    """
    from .grid import MaskLoadError, ShapeMismatchError, load_mask

    if loader is None:
        loader = lambda path: load_mask(path, threshold)
    preds = _stem_index(Path(pred_dir))
    labels = _stem_index(Path(label_dir))
    report = MetricReport()
    for stem in sorted(set(preds) | set(labels)):
        if stem not in labels:
            report.failures.append((preds[stem].name, "no matching label"))
            continue
        if stem not in preds:
            report.failures.append((labels[stem].name, "no matching prediction"))
            continue
        try:
            pred = loader(preds[stem])
            label = loader(labels[stem])
            check_same_shape(pred, label)
            report.rows.append((preds[stem].name, evaluate_pair(pred, label, cfg)))
        except (MaskLoadError, ShapeMismatchError) as exc:
            report.failures.append((preds[stem].name, str(exc)))
    if not report.rows and not report.failures:
        raise NoPairsError(f"no pairs found between {pred_dir} and {label_dir}")
    return report

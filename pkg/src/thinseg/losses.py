"""Differentiable training losses over a prediction field and a binary label.

All losses are scalars with exact gradients w.r.t. the prediction,
minimized toward 0. The skeleton-intersection losses sharpen the
prediction with a smooth threshold, extract soft skeletons from both
sides, diffuse each skeleton into a decaying halo, and compare the halos,
which makes them responsive to centerline distance where plain overlap
losses are not. The label side runs through the identical pipeline
(taped as a constant, so it carries no gradient).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .grid import as_field, as_mask, check_same_shape
from .morphology import DiffusionConfig, SkeletonConfig, smooth_diffuse, soft_skeleton

__all__ = [
    "LossConfig",
    "LOSS_SELECTORS",
    "DivergenceError",
    "FitResult",
    "smooth_threshold",
    "soft_dice_loss",
    "cl_dice_loss",
    "skil_dice_loss",
    "skil_product_loss",
    "mixed_loss",
    "fit_logits",
]

LOSS_SELECTORS = ("dice", "cl-dice", "skil-dice", "skil-product")


@dataclass(frozen=True)
class LossConfig:
    """Loss parameters; the defaults are the tuned training values."""

    s_border: int = 20
    n_iter_max: int = 50
    f: float = 0.82
    sharpness: float = 10.0
    epsilon: float = 1e-3
    skeleton_iterations: int = 10
    mix_dice_weight: float = 3.0
    mix_studied_weight: float = 1.0

    def diffusion(self) -> DiffusionConfig:
        return DiffusionConfig(s_border=self.s_border, n_iter_max=self.n_iter_max, f=self.f)

    def skeleton(self) -> SkeletonConfig:
        return SkeletonConfig(iterations=self.skeleton_iterations)


class DivergenceError(RuntimeError):
    """Optimization produced a non-finite value; carries the failing step."""

    def __init__(self, step: int, message: str):
        super().__init__(f"diverged at step {step}: {message}")
        self.step = step


def _label_const(pred: ad.DiffValue, label) -> ad.DiffValue:
    l = as_mask(label).astype(np.float64)
    check_same_shape(pred.value, l)
    return pred.tape.constant(l)


def smooth_threshold(pred: ad.DiffValue, s: float) -> ad.DiffValue:
    """Differentiable sharpening of a probability map around 0.5."""
    return ad.sigmoid(s * (pred - 0.5))


def _soft_dice_similarity(a: ad.DiffValue, b: ad.DiffValue, eps: float) -> ad.DiffValue:
    inter = ad.vsum(a * b)
    return (2.0 * inter + eps) / (ad.vsum(a) + ad.vsum(b) + eps)


def soft_dice_loss(pred: ad.DiffValue, label, epsilon: float = 1e-3) -> ad.DiffValue:
    """1 - soft Dice overlap between the prediction and the label."""
    l = _label_const(pred, label)
    return 1.0 - _soft_dice_similarity(pred, l, epsilon)


def cl_dice_loss(pred: ad.DiffValue, label, cfg: LossConfig = LossConfig()) -> ad.DiffValue:
    """Centerline Dice: harmonic mean of topology precision and sensitivity.

    Precision intersects the thresholded prediction's skeleton with the
    label; sensitivity intersects the label's skeleton with the thresholded
    prediction.
    """
    l = _label_const(pred, label)
    sharp = smooth_threshold(pred, cfg.sharpness)
    skel_p = soft_skeleton(sharp, cfg.skeleton())
    skel_l = soft_skeleton(l, cfg.skeleton())
    eps = cfg.epsilon
    tprec = (ad.vsum(skel_p * l) + eps) / (ad.vsum(skel_p) + eps)
    tsens = (ad.vsum(skel_l * sharp) + eps) / (ad.vsum(skel_l) + eps)
    return 1.0 - (2.0 * tprec * tsens) / (tprec + tsens)


def _diffused_skeleton(field: ad.DiffValue, cfg: LossConfig) -> ad.DiffValue:
    return smooth_diffuse(soft_skeleton(field, cfg.skeleton()), cfg.diffusion())


def skil_dice_loss(pred: ad.DiffValue, label, cfg: LossConfig = LossConfig()) -> ad.DiffValue:
    """1 - Dice between the diffused skeletons of prediction and label.

    The halos make the loss decrease smoothly as the predicted centerline
    approaches the labeled one, out to s_border pixels. The Dice here uses
    squared-sum denominators so that identical fractional halos score 1;
    the plain sum form would not.
    """
    l = _label_const(pred, label)
    halo_p = _diffused_skeleton(smooth_threshold(pred, cfg.sharpness), cfg)
    halo_l = _diffused_skeleton(l, cfg)
    inter = ad.vsum(halo_p * halo_l)
    denom = ad.vsum(halo_p * halo_p) + ad.vsum(halo_l * halo_l)
    return 1.0 - (2.0 * inter + cfg.epsilon) / (denom + cfg.epsilon)


def _halo_overlap(skel_a: ad.DiffValue, halo_b: ad.DiffValue, eps: float) -> ad.DiffValue:
    """Fraction of skeleton a lying inside b's halo: (sum(S_a * halo_b) + eps) / (sum(S_a) + eps)."""
    return (ad.vsum(skel_a * halo_b) + eps) / (ad.vsum(skel_a) + eps)


def skil_product_loss(pred: ad.DiffValue, label, cfg: LossConfig = LossConfig()) -> ad.DiffValue:
    """1 - geometric mean of the two skeleton-in-halo overlap fractions."""
    l = _label_const(pred, label)
    sharp = smooth_threshold(pred, cfg.sharpness)
    skel_p = soft_skeleton(sharp, cfg.skeleton())
    skel_l = soft_skeleton(l, cfg.skeleton())
    halo_p = smooth_diffuse(skel_p, cfg.diffusion())
    halo_l = smooth_diffuse(skel_l, cfg.diffusion())
    eps = cfg.epsilon
    forward = _halo_overlap(skel_p, halo_l, eps)
    reverse = _halo_overlap(skel_l, halo_p, eps)
    return 1.0 - ad.sqrt(forward * reverse)


_STUDIED = {
    "cl-dice": cl_dice_loss,
    "skil-dice": skil_dice_loss,
    "skil-product": skil_product_loss,
}


def mixed_loss(pred: ad.DiffValue, label, selector: str,
               cfg: LossConfig = LossConfig()) -> ad.DiffValue:
    """Training mixture: dice weight * Dice + studied weight * studied loss.

    The plain "dice" selector folds both weights onto the Dice term (3 + 1
    = 4 at the defaults) so every selector optimizes at the same scale.
    """
    if selector == "dice":
        return (cfg.mix_dice_weight + cfg.mix_studied_weight) * soft_dice_loss(pred, label, cfg.epsilon)
    if selector not in _STUDIED:
        raise ValueError(f"unknown loss selector {selector!r}; expected one of {LOSS_SELECTORS}")
    studied = _STUDIED[selector](pred, label, cfg)
    return cfg.mix_dice_weight * soft_dice_loss(pred, label, cfg.epsilon) + cfg.mix_studied_weight * studied


@dataclass
class FitResult:
    prediction: np.ndarray
    losses: list[float]


def fit_logits(label, init, selector: str, cfg: LossConfig = LossConfig(),
               steps: int = 200, lr: float = 1.0) -> FitResult:
    """Gradient descent on a per-pixel logit field against ``mixed_loss``.

    ``init`` is the starting logit field; the prediction is its sigmoid.
    Returns the final prediction and the per-step loss history. Divergence
    (a non-finite loss or gradient) raises ``DivergenceError`` with the
    failing step index.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if lr <= 0:
        raise ValueError(f"lr must be > 0, got {lr}")
    label_arr = as_mask(label)
    logits = as_field(init).copy()
    check_same_shape(logits, label_arr)
    losses: list[float] = []
    for step in range(steps):
        tape = ad.Tape()
        leaf = tape.leaf(logits)
        pred = ad.sigmoid(leaf)
        try:
            loss = mixed_loss(pred, label_arr, selector, cfg)
            ad.backward(loss)
        except ad.NumericalError as exc:
            raise DivergenceError(step, str(exc)) from exc
        grad = leaf.grad
        if not np.isfinite(loss.value) or not np.isfinite(grad).all():
            raise DivergenceError(step, "non-finite loss or gradient")
        losses.append(float(loss.value))
        logits -= lr * grad
    return FitResult(prediction=_sigmoid_array(logits), losses=losses)


def _sigmoid_array(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out

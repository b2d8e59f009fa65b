"""Central-difference gradient verification for the loss family.

The oracle re-evaluates the full forward pass at perturbed inputs, so it is
independent of the tape's backward machinery. Inputs are drawn on a coarse
value lattice: pool argmax decisions then sit at least two finite-difference
steps away from their runner-up, keeping the checked function smooth inside
every probe interval.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .losses import LossConfig, mixed_loss

__all__ = [
    "finite_difference_grad",
    "max_relative_error",
    "random_check_inputs",
    "loss_value",
    "loss_gradient",
    "check_loss_gradient",
]

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-3


def finite_difference_grad(fn, x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of a scalar function, one probe pair per pixel."""
    grad = np.zeros_like(x, dtype=np.float64)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        grad[idx] = (fn(xp) - fn(xm)) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = DEFAULT_TOLERANCE) -> float:
    """max |a - n| / max(|a|, |n|, floor).

    Flooring the denominator at ``floor`` makes the comparison an absolute
    one (at floor * tolerance) wherever both gradients are tiny.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def random_check_inputs(size: int, seed: int, h: float = DEFAULT_STEP):
    """A random prediction field and a random thin-structure label.

    Prediction values are sampled without replacement from a grid of
    spacing 3h inside (0.05, 0.95), so distinct pixels stay separated by
    more than the 2h finite-difference span.
    """
    rng = np.random.default_rng(seed)
    spacing = 3.0 * h
    levels = np.arange(0.05 + spacing, 0.95, spacing)
    if levels.size < size * size:
        raise ValueError(f"size {size} too large for the value lattice")
    pred = rng.choice(levels, size=size * size, replace=False).reshape(size, size)
    label = np.zeros((size, size), dtype=np.uint8)
    row = int(rng.integers(1, size - 1))
    col = int(rng.integers(1, size - 1))
    h_start = int(rng.integers(0, size // 2))
    v_end = int(rng.integers(size // 2, size))
    label[row, h_start:] = 1
    label[:v_end, col] = 1
    return pred, label


def loss_value(selector: str, pred: np.ndarray, label: np.ndarray,
               cfg: LossConfig = LossConfig()) -> float:
    tape = ad.Tape()
    leaf = tape.leaf(pred)
    return float(mixed_loss(leaf, label, selector, cfg).value)


def loss_gradient(selector: str, pred: np.ndarray, label: np.ndarray,
                  cfg: LossConfig = LossConfig()) -> np.ndarray:
    tape = ad.Tape()
    leaf = tape.leaf(pred)
    loss = mixed_loss(leaf, label, selector, cfg)
    ad.backward(loss)
    return leaf.grad


def check_loss_gradient(selector: str, size: int = 24, seed: int = 0,
                        cfg: LossConfig = LossConfig(), h: float = DEFAULT_STEP) -> float:
    """Max relative error between analytic and central-difference gradients."""
    pred, label = random_check_inputs(size, seed, h)
    analytic = loss_gradient(selector, pred, label, cfg)
    numeric = finite_difference_grad(lambda a: loss_value(selector, a, label, cfg), pred, h)
    return max_relative_error(analytic, numeric)

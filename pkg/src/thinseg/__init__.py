"""Skeleton-aware losses, metrics, and label deformations for thin-structure segmentation."""

__version__ = "0.1.0"

from .autodiff import DiffValue, NumericalError, Tape, backward
from .deform import (
    DeformConfig,
    PerlinConfig,
    apply_deform,
    deform_branch_cut,
    deform_combined,
    deform_shift,
    deform_width,
    perlin_field,
)
from .grid import (
    ColorImageError,
    FieldRangeError,
    MaskLoadError,
    ShapeMismatchError,
    UnreadableImageError,
    UnsupportedDepthError,
    distance_transform_l1,
    inner_distance,
    load_field,
    load_mask,
    save_field,
)
from .losses import (
    DivergenceError,
    FitResult,
    LossConfig,
    cl_dice_loss,
    fit_logits,
    mixed_loss,
    skil_dice_loss,
    skil_product_loss,
    smooth_threshold,
    soft_dice_loss,
)
from .metrics import (
    MetricConfig,
    MetricReport,
    PairScores,
    dice,
    evaluate_dirs,
    evaluate_pair,
    iou,
    lineacc_combined,
    lineacc_length,
    lineacc_pos,
    lineacc_width,
)
from .morphology import (
    DiffusionConfig,
    SkeletonConfig,
    decrease_dilate,
    hard_skeleton,
    smooth_diffuse,
    soft_dilate,
    soft_erode,
    soft_skeleton,
)

__all__ = [name for name in dir() if not name.startswith("_")]

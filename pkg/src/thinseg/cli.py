"""Batch command-line front door.

Subcommands: metrics, loss, skeletonize, diffuse, deform, gradcheck, fit.
Every run is deterministic given its flags and seeds; runs that write
outputs also write a JSON manifest alongside them. Exit codes: 0 success,
1 usage, 2 I/O or data, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import autodiff as ad
from .config import (
    build_deform_config,
    build_diffusion_config,
    build_loss_config,
    build_metric_config,
    build_skeleton_config,
    resolve_entries,
    snapshot,
)
from .deform import DEFORM_KINDS, apply_deform, deform_combined_detailed
from .gradcheck import DEFAULT_TOLERANCE, check_loss_gradient
from .grid import (
    MaskLoadError,
    ShapeMismatchError,
    load_field,
    load_mask,
    save_field,
)
from .losses import (
    LOSS_SELECTORS,
    DivergenceError,
    cl_dice_loss,
    fit_logits,
    mixed_loss,
    skil_dice_loss,
    skil_product_loss,
    soft_dice_loss,
)
from .metrics import NoPairsError, evaluate_dirs
from .morphology import smooth_diffuse, soft_skeleton

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_NUMERICAL = 3

_IMAGE_SUFFIXES = (".png", ".pgm")


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _derive_seed(master: int, name: str) -> int:
    """Stable per-file seed so parallel or reordered runs give identical outputs."""
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def _write_manifest(path: Path, argv: list[str], config, seeds=None, outcomes=None) -> None:
    payload = {
        "command": ["thinseg"] + list(argv),
        "version": __version__,
        "config": snapshot(config) if dataclasses.is_dataclass(config) else config,
        "seeds": seeds,
        "outcomes": outcomes,
    }
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")


def _list_images(directory: Path) -> list[Path]:
    return sorted(
        entry for entry in directory.iterdir()
        if entry.is_file() and entry.suffix.lower() in _IMAGE_SUFFIXES
    )


def _cmd_metrics(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_metric_config(entries, sigma=args.sigma, epsilon=args.epsilon)
    report = evaluate_dirs(args.pred_dir, args.label_dir, cfg, threshold=args.threshold)
    if args.out:
        out = Path(args.out)
        fmt = args.format or ("json" if out.suffix.lower() == ".json" else "csv")
        if fmt == "json":
            report.write_json(out)
        else:
            report.write_csv(out)
        outcomes = {name: "ok" for name, _ in report.rows}
        outcomes.update({name: f"error: {reason}" for name, reason in report.failures})
        _write_manifest(Path(str(out) + ".manifest.json"), argv, cfg, outcomes=outcomes)
    print(json.dumps({"pairs": len(report.rows), "mean": report.mean(),
                      "stderr": report.stderr()}, indent=2))
    if report.failures:
        for name, reason in report.failures:
            print(f"FAILED {name}: {reason}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


_RAW_LOSSES = {
    "dice": lambda pred, label, cfg: soft_dice_loss(pred, label, cfg.epsilon),
    "cl-dice": cl_dice_loss,
    "skil-dice": skil_dice_loss,
    "skil-product": skil_product_loss,
}


def _cmd_loss(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_loss_config(
        entries,
        s_border=args.s_border, n_iter_max=args.n_iter_max, f=args.f,
        sharpness=args.sharpness, epsilon=args.epsilon,
        skeleton_iterations=args.iterations,
    )
    pred = load_field(args.pred)
    label = load_mask(args.label, args.threshold)
    components = {}
    for name in sorted({"dice", args.selector}):
        tape = ad.Tape()
        components[name] = float(_RAW_LOSSES[name](tape.leaf(pred), label, cfg).value)
    tape = ad.Tape()
    mixture = float(mixed_loss(tape.leaf(pred), label, args.selector, cfg).value)
    print(json.dumps({
        "selector": args.selector,
        "loss": mixture,
        "components": components,
        "weights": {"dice": cfg.mix_dice_weight, "studied": cfg.mix_studied_weight},
    }, indent=2))
    return EXIT_OK


def _cmd_skeletonize(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_skeleton_config(entries, skeleton_iterations=args.iterations)
    mask = load_mask(args.input, args.threshold)
    tape = ad.Tape()
    skel = soft_skeleton(tape.constant(mask.astype(float)), cfg)
    save_field(skel.value, args.out)
    _write_manifest(Path(args.out + ".manifest.json"), argv, cfg,
                    outcomes={Path(args.input).name: "ok"})
    return EXIT_OK


def _cmd_diffuse(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_diffusion_config(entries, s_border=args.s_border,
                                 n_iter_max=args.n_iter_max, f=args.f)
    mask = load_mask(args.input, args.threshold)
    tape = ad.Tape()
    halo = smooth_diffuse(tape.constant(mask.astype(float)), cfg)
    save_field(halo.value, args.out)
    _write_manifest(Path(args.out + ".manifest.json"), argv, cfg,
                    outcomes={Path(args.input).name: "ok"})
    return EXIT_OK


def _cmd_deform(args, argv) -> int:
    entries = resolve_entries(args.config)
    base_cfg = build_deform_config(
        entries, kind=args.kind, shift_max=args.shift_max, alpha=args.alpha,
        p=args.p, apply_prob=args.apply_prob, seed=args.seed,
    )
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images = _list_images(in_dir)
    if not images:
        print(f"no input images in {in_dir}", file=sys.stderr)
        return EXIT_IO
    outcomes = {}
    seeds = {}
    for path in images:
        sub_seed = _derive_seed(base_cfg.seed, path.stem)
        cfg = dataclasses.replace(base_cfg, seed=sub_seed)
        mask = load_mask(path, args.threshold)
        if cfg.kind == "combined":
            out_mask, info = deform_combined_detailed(mask, cfg)
            outcomes[path.name] = {"ok": True, **info}
        else:
            out_mask = apply_deform(mask, cfg)
            outcomes[path.name] = {"ok": True}
        seeds[path.name] = sub_seed
        save_field(out_mask.astype(float), out_dir / (path.stem + ".png"))
    _write_manifest(out_dir / "manifest.json", argv, base_cfg, seeds=seeds, outcomes=outcomes)
    return EXIT_OK


def _cmd_gradcheck(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_loss_config(entries)
    worst = 0.0
    for seed in range(args.seeds):
        err = check_loss_gradient(args.selector, size=args.size, seed=seed, cfg=cfg)
        worst = max(worst, err)
        print(f"seed {seed}: max relative error {err:.3e}")
    if worst > DEFAULT_TOLERANCE:
        print(f"FAIL: worst error {worst:.3e} exceeds {DEFAULT_TOLERANCE}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"PASS: worst error {worst:.3e}")
    return EXIT_OK


def _cmd_fit(args, argv) -> int:
    entries = resolve_entries(args.config)
    cfg = build_loss_config(
        entries,
        s_border=args.s_border, n_iter_max=args.n_iter_max, f=args.f,
        sharpness=args.sharpness, epsilon=args.epsilon,
        skeleton_iterations=args.iterations,
    )
    label = load_mask(args.label, args.threshold)
    if args.init:
        start = load_field(args.init)
        logits = np.clip(np.log(start + 1e-9) - np.log(1.0 - start + 1e-9), -6.0, 6.0)
    else:
        logits = np.zeros(label.shape, dtype=float)
    result = fit_logits(label, logits, args.selector, cfg, steps=args.steps, lr=args.lr)
    save_field(result.prediction, args.out)
    curve_path = Path(args.out).with_suffix(".loss.csv")
    with open(curve_path, "w") as handle:
        handle.write("step,loss\n")
        for step, value in enumerate(result.losses):
            handle.write(f"{step},{value!r}\n")
    _write_manifest(Path(args.out + ".manifest.json"), argv, cfg,
                    outcomes={Path(args.label).name: "ok",
                              "final_loss": result.losses[-1]})
    print(json.dumps({"steps": args.steps, "final_loss": result.losses[-1]}))
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file "
                        "(default: $THINSEG_CONFIG if set)")
    parser.add_argument("--threshold", type=int, default=128,
                        help="mask binarization byte threshold (default 128)")


def _add_loss_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--s-border", dest="s_border", type=int)
    parser.add_argument("--n-iter-max", dest="n_iter_max", type=int)
    parser.add_argument("--f", type=float)
    parser.add_argument("--sharpness", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--iterations", type=int, help="soft-skeleton thinning rounds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="thinseg",
                     description="Skeleton-aware segmentation losses, metrics, "
                                 "and label deformations.")
    parser.add_argument("--version", action="version", version=f"thinseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("metrics", help="score matched prediction/label directories")
    p.add_argument("pred_dir")
    p.add_argument("label_dir")
    p.add_argument("--out", help="report path (CSV or JSON)")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--sigma", type=float)
    p.add_argument("--epsilon", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("loss", help="evaluate a loss on one prediction/label pair")
    p.add_argument("pred")
    p.add_argument("label")
    p.add_argument("--selector", choices=LOSS_SELECTORS, required=True)
    _add_loss_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_loss)

    p = sub.add_parser("skeletonize", help="write the soft skeleton of a mask")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--iterations", type=int)
    _add_common(p)
    p.set_defaults(func=_cmd_skeletonize)

    p = sub.add_parser("diffuse", help="write the diffused halo of a mask")
    p.add_argument("input")
    p.add_argument("out")
    p.add_argument("--s-border", dest="s_border", type=int)
    p.add_argument("--n-iter-max", dest="n_iter_max", type=int)
    p.add_argument("--f", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_diffuse)

    p = sub.add_parser("deform", help="apply seeded label deformations to a directory")
    p.add_argument("in_dir")
    p.add_argument("out_dir")
    p.add_argument("--kind", choices=DEFORM_KINDS, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shift-max", dest="shift_max", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--apply-prob", dest="apply_prob", type=float)
    _add_common(p)
    p.set_defaults(func=_cmd_deform)

    p = sub.add_parser("gradcheck", help="verify loss gradients against central differences")
    p.add_argument("--selector", choices=LOSS_SELECTORS, required=True)
    p.add_argument("--size", type=int, default=24, choices=range(4, 65), metavar="4..64")
    p.add_argument("--seeds", type=int, default=10, help="number of random instances")
    _add_common(p)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("fit", help="fit a per-pixel logit field to a label")
    p.add_argument("label")
    p.add_argument("--selector", choices=LOSS_SELECTORS, required=True)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=1.0)
    p.add_argument("--out", required=True, help="final prediction PNG")
    p.add_argument("--init", help="optional initial prediction PNG (mapped to logits)")
    _add_loss_flags(p)
    _add_common(p)
    p.set_defaults(func=_cmd_fit)

    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (MaskLoadError, NoPairsError, ShapeMismatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ad.NumericalError, DivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Subcommands: train, infer, eval, summary, make-synthetic.  Exit codes:
0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, evaluator, synthetic
from .inference import predict_multiscale
from .loss import LossConfig
from .model import EnrichmentSpec, build_tin1, build_tin2, init_params, param_count
from .nms import nms_thin
from .trainer import AugmentPlan, NumericError, TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tinedge", description="Compact CNN edge detection toolkit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("train", help="train a model on a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--variant", required=True, choices=("tin1", "tin2"))
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", help="key=value overrides for train/loss settings")
    p.add_argument("--log", help="training log path (default: <out>.log)")

    p = sub.add_parser("infer", help="predict an edge map for one image")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scales", default="1", help="comma-separated prediction scales")
    p.add_argument("--nms", action="store_true", help="thin the averaged map")

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--tolerance", type=float, default=0.0075)
    p.add_argument("--out", required=True)

    p = sub.add_parser("summary", help="print the layer table and parameter count")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--ckpt")
    group.add_argument("--variant", choices=("tin1", "tin2"))

    p = sub.add_parser("make-synthetic", help="emit the synthetic-shapes fixture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=96)
    return parser


_INT_KEYS = {"epochs", "lr_drop_every", "batch_size", "seed", "checkpoint_every"}
_FLOAT_KEYS = {"lr0", "weight_decay", "momentum", "lr_drop_factor"}


def _parse_config(path):
    """Line-oriented key=value overrides; returns (train_kw, loss_kw, aug_kw)."""
    train_kw, loss_kw, aug_kw = {}, {}, {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise dataio.DataError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _INT_KEYS:
                train_kw[key] = int(value)
            elif key in _FLOAT_KEYS:
                train_kw[key] = float(value)
            elif key == "gamma":
                loss_kw["gamma"] = float(value)
            elif key == "threshold":
                loss_kw["threshold"] = int(value)
            elif key == "aug_rotations":
                aug_kw["rotations"] = int(value)
            elif key == "aug_flips":
                aug_kw["flips"] = value.lower() not in ("0", "false", "no")
            elif key == "aug_scales":
                aug_kw["scales"] = tuple(float(s) for s in value.split(",") if s.strip())
            elif key == "dilations":
                train_kw["_dilations"] = tuple(int(s) for s in value.split(",") if s.strip())
            else:
                raise dataio.DataError(f"{path}:{lineno}: unknown key {key!r}")
        except ValueError as exc:
            raise dataio.DataError(f"{path}:{lineno}: bad value for {key!r}: {value!r}") from exc
    return train_kw, loss_kw, aug_kw


def _load_samples(manifest_path):
    manifest = dataio.load_manifest(manifest_path)
    samples = []
    for image_path, gt_path in manifest:
        image = dataio.load_image(image_path)
        gt = dataio.load_gt(gt_path)
        if image.data.shape[2:] != gt.values.shape:
            raise dataio.DataError(
                f"{image_path}: image {image.data.shape[2:]} and ground truth "
                f"{gt.values.shape} sizes differ")
        samples.append((image.data[0], gt))
    return manifest, samples


def _cmd_train(args) -> int:
    train_kw, loss_kw, aug_kw = ({}, {}, {})
    if args.config:
        train_kw, loss_kw, aug_kw = _parse_config(args.config)
    dilations = train_kw.pop("_dilations", None)
    env_seed = os.environ.get("TIN_SEED")
    if env_seed is not None:
        train_kw["seed"] = int(env_seed)
    train_cfg = TrainConfig(**train_kw)
    loss_cfg = LossConfig(**loss_kw)
    plan = AugmentPlan(**aug_kw) if aug_kw else AugmentPlan()

    _, samples = _load_samples(args.manifest)
    if not samples:
        raise dataio.DataError("manifest is empty")

    if args.variant == "tin1":
        spec = EnrichmentSpec(16, dilation_rates=dilations) if dilations else None
        graph = build_tin1(spec)
    else:
        if dilations:
            graph = build_tin2(EnrichmentSpec(16, dilation_rates=dilations),
                               EnrichmentSpec(64, dilation_rates=dilations))
        else:
            graph = build_tin2()
    init_params(graph, train_cfg.seed)

    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    def checkpoint_fn(g, epoch):
        dataio.save_checkpoint(g, out_path.with_suffix(out_path.suffix + f".epoch{epoch}"))

    log = train(graph, samples, train_cfg, loss_cfg, plan,
                checkpoint_fn=checkpoint_fn if train_cfg.checkpoint_every else None)
    dataio.save_checkpoint(graph, out_path)
    log.save(args.log if args.log else str(out_path) + ".log")
    print(f"trained {args.variant} for {train_cfg.epochs} epochs, "
          f"saved {out_path}")
    return EXIT_OK


def _cmd_infer(args) -> int:
    try:
        scales = tuple(float(s) for s in args.scales.split(",") if s.strip())
    except ValueError as exc:
        raise UsageError(f"bad --scales value: {args.scales}") from exc
    if not scales:
        raise UsageError("--scales needs at least one value")
    graph = dataio.load_checkpoint(args.ckpt)
    image = dataio.load_image(args.image)
    edge_map = predict_multiscale(graph, image, scales)
    if args.nms:
        edge_map = nms_thin(edge_map)
    dataio.save_edge_map(edge_map, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    manifest, _ = _load_samples(args.manifest)
    pred_dir = Path(args.pred_dir)
    preds, gts = [], []
    for image_path, gt_path in manifest:
        pred_path = pred_dir / (Path(image_path).stem + ".png")
        if not pred_path.exists():
            raise dataio.DataError(f"missing prediction {pred_path}")
        pred = np.asarray(dataio._open_8bit(pred_path), dtype=np.float64) / 255.0
        if pred.ndim != 2:
            raise dataio.DataError(f"{pred_path}: prediction must be grayscale")
        preds.append(pred)
        gts.append(dataio.load_gt(gt_path))
    report = evaluator.evaluate_dataset(preds, gts, max_tol=args.tolerance)
    Path(args.out).write_text(evaluator.format_report(report))
    print(f"ods={report.ods:.4f} ois={report.ois:.4f} tolerance={report.tolerance}")
    return EXIT_OK


def _cmd_summary(args) -> int:
    if args.ckpt:
        graph = dataio.load_checkpoint(args.ckpt)
    else:
        graph = build_tin1() if args.variant == "tin1" else build_tin2()
    print(f"variant: {graph.variant}")
    print(f"{'layer':<14}{'kind':<20}{'shape':<28}{'params':>10}")
    for info in graph.layers:
        print(f"{info.name:<14}{info.kind:<20}{info.detail:<28}{info.params:>10,}")
    print(f"total parameters: {param_count(graph):,}")
    return EXIT_OK


def _cmd_make_synthetic(args) -> int:
    out_dir = Path(args.out)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "gt").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (image, gt) in enumerate(
            synthetic.generate_dataset(args.count, args.seed, args.size)):
        image_rel = f"images/img_{i:03d}.png"
        gt_rel = f"gt/gt_{i:03d}.png"
        dataio.save_image(image, out_dir / image_rel)
        dataio.save_gt(gt, out_dir / gt_rel)
        lines.append(f"{image_rel}\t{gt_rel}")
    manifest_path = out_dir / "manifest.txt"
    manifest_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {args.count} samples under {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "summary": _cmd_summary,
    "make-synthetic": _cmd_make_synthetic,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (dataio.DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

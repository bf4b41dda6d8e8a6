"""Command line interface: train-roi, train-nuclei, predict."""
import argparse
import sys

import numpy as np

from .config import TrainConfig
from .data import load_labels, load_stack, manifest_channels, zscore_stack
from .niftiio import write_volume
from .predict import load_checkpoint, predict_combine
from .roi_gt import make_roi_gt
from .train import train_nuclei, train_roi


def _train_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--stacks", nargs="+", required=True,
                   help="feature stack NIfTI files, one per subject")
    p.add_argument("--labels", nargs="+", required=True,
                   help="label NIfTI files, matching --stacks order")
    p.add_argument("--manifest", help="stack channel sidecar JSON; sets and "
                                      "checks the channel count")
    p.add_argument("--out", required=True, help="checkpoint path (.pt)")
    p.add_argument("--log", help="JSON training log path")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--base", type=int, default=16)
    p.add_argument("--levels", type=int, default=5)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--stop-below", type=float, default=None,
                   help="stop once the epoch loss drops under this value")
    return p


def _load_training_inputs(args):
    if len(args.stacks) != len(args.labels):
        raise ValueError(f"{len(args.stacks)} stacks vs {len(args.labels)} labels")
    stacks, labels = [], []
    for spath, lpath in zip(args.stacks, args.labels):
        stack, _ = load_stack(spath)
        lab, _ = load_labels(lpath)
        stacks.append(zscore_stack(stack))
        labels.append(lab)
    channels = stacks[0].shape[0]
    manifest = None
    if args.manifest:
        import json
        with open(args.manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        declared = manifest_channels(args.manifest)
        if declared != channels:
            raise ValueError(f"manifest declares {declared} channels, "
                             f"stacks have {channels}")
    return stacks, labels, channels, manifest


def _config(args, channels: int, classes: int) -> TrainConfig:
    return TrainConfig(in_channels=channels, classes=classes, base=args.base,
                       levels=args.levels, learning_rate=args.lr,
                       max_epochs=args.epochs, seed=args.seed,
                       stop_below=args.stop_below)


def _cmd_train_roi(args) -> int:
    stacks, labels, channels, manifest = _load_training_inputs(args)
    cfg = _config(args, channels, classes=13)
    roi_gts = [make_roi_gt(lab) for lab in labels]
    result = train_roi(stacks, roi_gts, cfg, ckpt_path=args.out,
                       log_path=args.log, manifest=manifest)
    print(f"roi: best loss {result['best_loss']:.6f} at epoch "
          f"{result['best_epoch']} ({result['stopped']})")
    return 0


def _cmd_train_nuclei(args) -> int:
    stacks, labels, channels, manifest = _load_training_inputs(args)
    cfg = _config(args, channels, classes=args.classes)
    result = train_nuclei(stacks, labels, cfg, ckpt_path=args.out,
                          log_path=args.log, manifest=manifest)
    print(f"nuclei: best loss {result['best_loss']:.6f} at epoch "
          f"{result['best_epoch']} ({result['stopped']})")
    return 0


def _cmd_predict(args) -> int:
    stack, affine = load_stack(args.stack)
    roi = load_checkpoint(args.roi)
    nuclei = load_checkpoint(args.nuclei)
    labels = predict_combine(roi, nuclei, zscore_stack(stack),
                             threshold=args.threshold)
    write_volume(labels.astype(np.int32), affine, args.out, intent_code=1002)
    print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="refnet",
        description="Two-stage segmentation training on feature stacks",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    train = _train_parent()

    sub.add_parser("train-roi", parents=[train],
                   help="train the foreground-mask stage (Dice loss)"
                   ).set_defaults(fn=_cmd_train_roi)

    nuc = sub.add_parser("train-nuclei", parents=[train],
                         help="train the class stage (masked soft-TPR loss)")
    nuc.add_argument("--classes", type=int, default=13)
    nuc.set_defaults(fn=_cmd_train_nuclei)

    pred = sub.add_parser("predict", help="ROI mask times nuclei argmax")
    pred.add_argument("--stack", required=True)
    pred.add_argument("--roi", required=True, help="ROI checkpoint")
    pred.add_argument("--nuclei", required=True, help="nuclei checkpoint")
    pred.add_argument("--threshold", type=float, default=0.5)
    pred.add_argument("--out", required=True, help="output label NIfTI")
    pred.set_defaults(fn=_cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3


if __name__ == "__main__":
    raise SystemExit(main())

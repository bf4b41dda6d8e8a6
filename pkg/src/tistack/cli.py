"""Command-line interface.

Exit codes: 0 success, 2 validation/parameter problems, 3 file format or
I/O problems, 4 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .dti import DiffusionSet, eigen_field, fit_tensor, read_bvals_bvecs, scalar_maps, westin_maps
from .errors import FormatError, NumericalError, ValidationError
from .harmonize import apply_bias, fcm, harmonic_bias, wm_mask, wm_mean_normalize
from .knutsson import edge_map, knutsson_field
from .labels import (builtin_scheme, default_unification_map, load_mapping,
                     load_scheme, mapping_to_doc, remap, validate_mapping, write_json)
from .metrics import evaluate_labels, masked_soft_tpr_loss
from .nifti import read_nifti, write_nifti
from .phantom import generate_phantom, load_spec, nuclei_spec, spec_to_doc
from .pipeline import load_config, run_pipeline
from .qmri import (T1_MAX, T1_MIN, IRAcquisition, MultiTISpec, QMaps,
                   fit_qmaps, synth_multi_ti)
from .stack import assemble_feature_stack, manifest_from_doc
from .volume import Intent, Volume, center_crop, default_crop_center


def _f32(vol: Volume) -> Volume:
    return vol.with_data(vol.data.astype(np.float32))


def _save_labels(vol: Volume, path: str) -> None:
    data = vol.data
    dtype = np.uint8 if data.size and 0 <= data.min() and data.max() < 256 else np.int32
    write_nifti(vol.with_data(data.astype(dtype)), path)


def _load_scheme_arg(name_or_path: str):
    if name_or_path in ("ratnus13", "unified7"):
        return builtin_scheme(name_or_path)
    with open(name_or_path, encoding="utf-8") as fh:
        return load_scheme(json.load(fh))


def _cmd_harmonize(args) -> int:
    mprage = read_nifti(args.mprage)
    fgatir = read_nifti(args.fgatir)
    if (args.bias1 is None) != (args.bias2 is None):
        raise ValidationError("--bias1 and --bias2 must be given together")
    if args.bias1 is not None:
        combined = harmonic_bias(read_nifti(args.bias1), read_nifti(args.bias2))
        mprage = apply_bias(mprage, combined)
        fgatir = apply_bias(fgatir, combined)
        if args.out_bias:
            write_nifti(_f32(combined), args.out_bias)
    if args.brain_mask is not None:
        mask = read_nifti(args.brain_mask)
    else:
        mask = mprage.with_data((mprage.data > 0).astype(np.uint8), intent=Intent.LABEL)
    result = fcm(mprage, mask, c=args.classes, m=args.fuzziness,
                 tol=args.tol, max_iter=args.max_iter)
    wm = wm_mask(result, threshold=args.wm_threshold)
    mprage, fgatir, scale = wm_mean_normalize(mprage, fgatir, wm, target=args.target)
    write_nifti(_f32(mprage), args.out_mprage)
    write_nifti(_f32(fgatir), args.out_fgatir)
    _save_labels(wm, args.out_wm_mask)
    print(f"harmonize: wm scale {scale:.6g}, centroids "
          + " ".join(f"{c:.4g}" for c in result.centroids))
    return 0


def _cmd_fit_qmap(args) -> int:
    mprage = read_nifti(args.mprage)
    fgatir = read_nifti(args.fgatir)
    mask = read_nifti(args.mask) if args.mask else None
    q = fit_qmaps(
        mprage, fgatir,
        IRAcquisition(tr=args.tr, ti=args.ti_mprage),
        IRAcquisition(tr=args.tr, ti=args.ti_fgatir),
        brain_mask=mask, threads=args.threads,
    )
    write_nifti(_f32(q.pd), args.out_pd)
    write_nifti(_f32(q.t1), args.out_t1)
    _save_labels(q.valid_mask, args.out_valid)
    n = int(np.count_nonzero(q.valid_mask.data))
    print(f"fit-qmap: {n} valid voxels")
    return 0


def _cmd_synth_ti(args) -> int:
    pd = read_nifti(args.pd)
    t1 = read_nifti(args.t1)
    if args.valid:
        valid = read_nifti(args.valid)
        vm = valid.data > 0
        valid = valid.with_data(vm.astype(np.uint8), intent=Intent.LABEL)
    else:
        vm = (pd.data > 0) & (t1.data >= T1_MIN) & (t1.data <= T1_MAX)
        valid = pd.with_data(vm.astype(np.uint8), intent=Intent.LABEL)
    # QMaps requires invalid voxels to be zeroed; apply the mask here so a
    # partial mask restricts the synthesis instead of failing validation.
    pd = pd.with_data(np.where(vm, pd.data, 0.0))
    t1 = t1.with_data(np.where(vm, t1.data, 0.0))
    q = QMaps(pd=pd, t1=t1, tr=args.tr, valid_mask=valid)
    spec = MultiTISpec(ti_start=args.ti_start, ti_end=args.ti_end, ti_step=args.ti_step)
    out = synth_multi_ti(q, spec)
    write_nifti(_f32(out), args.out)
    print(f"synth-ti: {out.n_channels} channels")
    return 0


def _cmd_dti_fit(args) -> int:
    dwi = read_nifti(args.dwi)
    bvals, bvecs = read_bvals_bvecs(args.bval, args.bvec)
    mask = read_nifti(args.mask) if args.mask else None
    ds = DiffusionSet(dwi=dwi, bvals=bvals, bvecs=bvecs)
    tf = fit_tensor(ds, mask=mask, max_b=args.max_b)
    prefix = args.out_prefix
    os.makedirs(os.path.dirname(prefix) or ".", exist_ok=True)
    evals, evec1 = eigen_field(tf)
    maps = scalar_maps(tf)
    write_nifti(_f32(tf.tensor), prefix + "tensor.nii.gz")
    _save_labels(tf.valid_mask, prefix + "valid.nii.gz")
    for name in ("fa", "trace", "ad", "rd"):
        write_nifti(_f32(maps[name]), f"{prefix}{name}.nii.gz")
    write_nifti(_f32(evals), prefix + "evals.nii.gz")
    write_nifti(_f32(evec1), prefix + "evec1.nii.gz")
    write_nifti(_f32(westin_maps(tf)), prefix + "westin.nii.gz")
    n = int(np.count_nonzero(tf.valid_mask.data))
    print(f"dti-fit: {n} valid voxels")
    return 0


def _cmd_knutsson(args) -> int:
    evec1 = read_nifti(args.evec1)
    mask = read_nifti(args.mask) if args.mask else None
    k5 = knutsson_field(evec1, mask=mask)
    write_nifti(_f32(k5), args.out_k5)
    if args.out_edge:
        write_nifti(_f32(edge_map(k5, presmooth_sigma=args.presmooth_sigma)), args.out_edge)
    return 0


def _cmd_stack(args) -> int:
    with open(args.manifest, encoding="utf-8") as fh:
        doc = json.load(fh)
    base = os.path.dirname(os.path.abspath(args.manifest))

    def resolve(ref):
        path = ref if os.path.isabs(ref) else os.path.join(base, ref)
        return read_nifti(path)

    manifest = manifest_from_doc(doc, resolve)
    stacked, provenance = assemble_feature_stack(manifest)
    write_nifti(_f32(stacked), args.out)
    if args.sidecar:
        write_json(args.sidecar, provenance)
    print(f"stack: {stacked.n_channels} channels")
    return 0


def _cmd_crop(args) -> int:
    vol = read_nifti(getattr(args, "in"))
    center = tuple(args.center) if args.center else default_crop_center(vol)
    write_nifti(center_crop(vol, tuple(args.size), center), args.out)
    return 0


def _cmd_remap_labels(args) -> int:
    vol = read_nifti(getattr(args, "in"))
    if args.map == "default":
        um = default_unification_map()
    else:
        with open(args.map, encoding="utf-8") as fh:
            um = load_mapping(json.load(fh))
    if args.report:
        if not (args.source_scheme and args.target_scheme):
            raise ValidationError("--report needs --source-scheme and --target-scheme")
        report = validate_mapping(um, _load_scheme_arg(args.source_scheme),
                                  _load_scheme_arg(args.target_scheme))
        write_json(args.report, report)
    _save_labels(remap(vol, um), args.out)
    return 0


def _cmd_evaluate(args) -> int:
    soft_mode = args.pred_probs is not None or args.gt_onehot is not None
    if soft_mode:
        if not (args.pred_probs and args.gt_onehot):
            raise ValidationError("--pred-probs and --gt-onehot must be given together")
        probs = read_nifti(args.pred_probs)
        onehot = read_nifti(args.gt_onehot)
        loss = masked_soft_tpr_loss(probs, onehot, eps=args.eps)
        doc = {
            "masked_soft_tpr_loss": loss,
            "eps": args.eps,
            "channels": probs.n_channels,
        }
        if args.out:
            write_json(args.out, doc)
        print(f"masked_soft_tpr_loss: {loss:.9f}")
        return 0
    if not (args.pred and args.gt):
        raise ValidationError("evaluate needs --pred and --gt (or the soft-loss pair)")
    scheme = _load_scheme_arg(args.scheme) if args.scheme else None
    report = evaluate_labels(read_nifti(args.pred), read_nifti(args.gt),
                             scheme=scheme, subject=args.subject, with_dice=args.dice)
    if args.out:
        write_json(args.out, report.to_doc())
    for c in report.classes:
        print(f"class {c.code}: tpr {c.tpr:.4f} ({c.tp}/{c.gt_voxels})")
    print(f"weighted average tpr: {report.weighted_average_tpr:.4f}")
    return 0


def _cmd_run(args) -> int:
    cfg = load_config(args.config, out_dir=args.out_dir, threads=args.threads)
    log = run_pipeline(cfg)
    print(f"run: wrote {len(log['checksums'])} files to {cfg.out_dir}")
    return 0


def _cmd_phantom(args) -> int:
    from .dti import write_bvals_bvecs

    if args.spec:
        spec = load_spec(args.spec)
    else:
        spec = nuclei_spec(dims=tuple(args.dims), n_labels=args.n_labels,
                           noise=args.noise, sparsity=args.sparsity,
                           seed=args.seed, bias=args.bias)
    ph = generate_phantom(spec)
    os.makedirs(args.out, exist_ok=True)

    def out(name):
        return os.path.join(args.out, name)

    for name in ("mprage", "fgatir", "bias1", "bias2", "pd", "t1"):
        write_nifti(_f32(ph[name]), out(f"{name}.nii.gz"))
    write_nifti(_f32(ph["dwi"]), out("dwi.nii.gz"))
    write_nifti(_f32(ph["tensors"]), out("tensors.nii.gz"))
    for name in ("labels_dense", "labels_sparse", "mask"):
        _save_labels(ph[name], out(f"{name}.nii.gz"))
    write_bvals_bvecs(out("dwi.bval"), out("dwi.bvec"), ph["bvals"], ph["bvecs"])
    write_json(out("phantom_spec.json"), spec_to_doc(spec))
    print(f"phantom: {spec.dims[0]}x{spec.dims[1]}x{spec.dims[2]} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tistack",
        description="Multi-TI synthesis, diffusion features, feature stacks, "
                    "label unification, and sparse-label evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads for voxelwise fits")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("harmonize", parents=[common],
                       help="joint bias correction and WM-mean normalization")
    p.add_argument("--mprage", required=True)
    p.add_argument("--fgatir", required=True)
    p.add_argument("--bias1")
    p.add_argument("--bias2")
    p.add_argument("--brain-mask")
    p.add_argument("--target", type=float, default=1000.0)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--fuzziness", type=float, default=2.0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--wm-threshold", type=float, default=0.5)
    p.add_argument("--out-mprage", required=True)
    p.add_argument("--out-fgatir", required=True)
    p.add_argument("--out-wm-mask", required=True)
    p.add_argument("--out-bias")
    p.set_defaults(func=_cmd_harmonize)

    p = sub.add_parser("fit-qmap", parents=[common],
                       help="per-voxel PD/T1 estimation from an IR pair")
    p.add_argument("--mprage", required=True)
    p.add_argument("--fgatir", required=True)
    p.add_argument("--tr", type=float, default=4000.0)
    p.add_argument("--ti-mprage", type=float, default=1400.0)
    p.add_argument("--ti-fgatir", type=float, default=400.0)
    p.add_argument("--mask")
    p.add_argument("--out-pd", required=True)
    p.add_argument("--out-t1", required=True)
    p.add_argument("--out-valid", required=True)
    p.set_defaults(func=_cmd_fit_qmap)

    p = sub.add_parser("synth-ti", parents=[common],
                       help="synthesize a multi-TI series from PD/T1 maps")
    p.add_argument("--pd", required=True)
    p.add_argument("--t1", required=True)
    p.add_argument("--valid", help="fit validity mask (default: pd>0 and t1>0)")
    p.add_argument("--tr", type=float, default=4000.0)
    p.add_argument("--ti-start", type=float, default=400.0)
    p.add_argument("--ti-end", type=float, default=1400.0)
    p.add_argument("--ti-step", type=float, default=20.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth_ti)

    p = sub.add_parser("dti-fit", parents=[common],
                       help="tensor fit and scalar feature maps")
    p.add_argument("--dwi", required=True)
    p.add_argument("--bval", required=True)
    p.add_argument("--bvec", required=True)
    p.add_argument("--mask")
    p.add_argument("--max-b", type=float, default=None,
                   help="exclude shells with b above this value")
    p.add_argument("--out-prefix", required=True,
                   help="prefix for fa/trace/ad/rd/evals/evec1/westin/tensor/valid outputs")
    p.set_defaults(func=_cmd_dti_fit)

    p = sub.add_parser("knutsson", parents=[common],
                       help="5-channel orientation map and edge map")
    p.add_argument("--evec1", required=True)
    p.add_argument("--mask")
    p.add_argument("--presmooth-sigma", type=float, default=None)
    p.add_argument("--out-k5", required=True)
    p.add_argument("--out-edge")
    p.set_defaults(func=_cmd_knutsson)

    p = sub.add_parser("stack", parents=[common],
                       help="assemble a feature stack from a manifest")
    p.add_argument("--manifest", required=True,
                   help="JSON manifest; relative refs resolve against its directory")
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="write per-channel provenance JSON here")
    p.set_defaults(func=_cmd_stack)

    p = sub.add_parser("crop", parents=[common], help="fixed-size center crop")
    p.add_argument("--in", required=True)
    p.add_argument("--size", type=int, nargs=3, default=[96, 96, 96])
    p.add_argument("--center", type=int, nargs=3, default=None,
                   help="crop center in voxels (default: grid midpoint)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_crop)

    p = sub.add_parser("remap-labels", parents=[common],
                       help="translate label codes between schemes")
    p.add_argument("--in", required=True)
    p.add_argument("--map", required=True,
                   help="mapping JSON, or 'default' for the built-in "
                        "ratnus13->unified7 placeholder")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write a mapping coverage report JSON here")
    p.add_argument("--source-scheme")
    p.add_argument("--target-scheme")
    p.set_defaults(func=_cmd_remap_labels)

    p = sub.add_parser("evaluate", parents=[common],
                       help="sparse-ground-truth metrics (TPR report or soft loss)")
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--scheme", help="ratnus13, unified7, or a scheme JSON path")
    p.add_argument("--subject")
    p.add_argument("--dice", action="store_true", help="add per-class Dice")
    p.add_argument("--pred-probs", help="4D probability volume for the soft loss")
    p.add_argument("--gt-onehot", help="4D one-hot ground truth for the soft loss")
    p.add_argument("--eps", type=float, default=1e-6)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="full pipeline from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", help="override the config's output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("phantom", parents=[common],
                       help="generate a synthetic test subject")
    p.add_argument("--spec", help="phantom spec JSON")
    p.add_argument("--preset", choices=["nuclei"], default="nuclei",
                   help="built-in spec used when --spec is absent")
    p.add_argument("--dims", type=int, nargs=3, default=[48, 48, 48])
    p.add_argument("--n-labels", type=int, default=13)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--sparsity", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bias", action="store_true",
                   help="apply the preset polynomial bias fields")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_phantom)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

"""End-to-end pipeline: harmonize -> fit-qmap -> synth-ti -> dti-fit ->
knutsson -> stack -> crop.

Every stage persists its products under the output directory, and a
machine-readable run log records parameters, library versions, channel
provenance, and a checksum per file. The pipeline is seed-free; two runs
with the same inputs and config produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .dti import DiffusionSet, eigen_field, fit_tensor, read_bvals_bvecs, scalar_maps, westin_maps
from .errors import InputError, TiStackError, ValidationError
from .harmonize import apply_bias, fcm, harmonic_bias, wm_mask, wm_mean_normalize
from .knutsson import edge_map, knutsson_field
from .nifti import read_nifti, write_nifti
from .qmri import IRAcquisition, MultiTISpec, fit_qmaps, synth_multi_ti
from .stack import (DEFAULT_EXPECTED_CHANNELS, assemble_feature_stack,
                    manifest_from_doc, manifest_from_products)
from .volume import Intent, Volume, center_crop, default_crop_center

REQUIRED_INPUTS = ("mprage", "fgatir", "dwi", "bval", "bvec")
OPTIONAL_INPUTS = ("bias1", "bias2", "mask")

STAGES = ("harmonize", "fit-qmap", "synth-ti", "dti-fit", "knutsson", "stack", "crop")

# products cropped in the final stage (every grid-shaped deliverable)
CROP_PRODUCTS = (
    "mprage", "fgatir", "wm_mask", "pd", "t1", "fit_valid", "multi_ti",
    "tensor", "dti_valid", "ad", "fa", "rd", "trace", "evals", "westin",
    "k5", "edge", "stack",
)


@dataclass(frozen=True)
class PipelineConfig:
    inputs: dict
    out_dir: str
    tr: float = 4000.0
    ti_mprage: float = 1400.0
    ti_fgatir: float = 400.0
    multi_ti: MultiTISpec = field(default_factory=MultiTISpec)
    fcm_classes: int = 3
    fcm_fuzziness: float = 2.0
    fcm_tol: float = 1e-4
    fcm_max_iter: int = 200
    wm_threshold: float = 0.5
    norm_target: float = 1000.0
    dti_max_b: float | None = None
    presmooth_sigma: float | None = None
    crop_size: tuple = (96, 96, 96)
    crop_center: tuple | None = None
    expected_channels: int | None = DEFAULT_EXPECTED_CHANNELS
    manifest: dict | None = None  # None -> default product manifest
    threads: int = 1

    def __post_init__(self):
        missing = [k for k in REQUIRED_INPUTS if k not in self.inputs]
        if missing:
            raise ValidationError(f"config lacks required inputs: {missing}")
        if len(self.crop_size) != 3 or any(int(s) != s or s < 1 for s in self.crop_size):
            raise ValidationError("crop size must be 3 positive integers")


def config_from_doc(doc: dict, out_dir=None, threads: int = 1) -> PipelineConfig:
    try:
        acq = doc.get("acquisition", {})
        mt = doc.get("multi_ti", {})
        fcm_cfg = doc.get("fcm", {})
        crop = doc.get("crop", {})
        stack_cfg = doc.get("stack", {})
        center = crop.get("center")
        return PipelineConfig(
            inputs=dict(doc["inputs"]),
            out_dir=str(out_dir if out_dir is not None else doc["out_dir"]),
            tr=float(acq.get("tr", 4000.0)),
            ti_mprage=float(acq.get("ti_mprage", 1400.0)),
            ti_fgatir=float(acq.get("ti_fgatir", 400.0)),
            multi_ti=MultiTISpec(
                ti_start=float(mt.get("start", 400.0)),
                ti_end=float(mt.get("end", 1400.0)),
                ti_step=float(mt.get("step", 20.0)),
            ),
            fcm_classes=int(fcm_cfg.get("classes", 3)),
            fcm_fuzziness=float(fcm_cfg.get("fuzziness", 2.0)),
            fcm_tol=float(fcm_cfg.get("tol", 1e-4)),
            fcm_max_iter=int(fcm_cfg.get("max_iter", 200)),
            wm_threshold=float(fcm_cfg.get("wm_threshold", 0.5)),
            norm_target=float(fcm_cfg.get("target", 1000.0)),
            dti_max_b=(None if doc.get("dti", {}).get("max_b") is None
                       else float(doc["dti"]["max_b"])),
            presmooth_sigma=(None if doc.get("knutsson", {}).get("presmooth_sigma") is None
                             else float(doc["knutsson"]["presmooth_sigma"])),
            crop_size=tuple(int(s) for s in crop.get("size", (96, 96, 96))),
            crop_center=None if center is None else tuple(int(c) for c in center),
            expected_channels=stack_cfg.get("expected_channels", DEFAULT_EXPECTED_CHANNELS),
            manifest=stack_cfg.get("manifest"),
            threads=threads,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed pipeline config: {exc}") from exc


def load_config(path, out_dir=None, threads: int = 1) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return config_from_doc(json.load(fh), out_dir=out_dir, threads=threads)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _storage_volume(vol: Volume) -> Volume:
    """float64 intensity products are stored as float32; labels shrink to uint8."""
    data = vol.data
    if vol.intent == Intent.LABEL:
        if data.size and data.max() < 256 and data.min() >= 0:
            return vol.with_data(data.astype(np.uint8))
        return vol.with_data(data.astype(np.int32))
    return vol.with_data(data.astype(np.float32))


class _Run:
    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self.products: dict = {}
        self.files: dict = {}
        self.provenance = None

    def save(self, name: str, vol: Volume, subdir: str = "") -> None:
        out = os.path.join(self.cfg.out_dir, subdir) if subdir else self.cfg.out_dir
        os.makedirs(out, exist_ok=True)
        path = os.path.join(out, f"{name}.nii.gz")
        write_nifti(_storage_volume(vol), path)
        key = f"{subdir}/{name}" if subdir else name
        self.files[key] = path
        if not subdir:
            self.products[name] = vol


def _stage(name: str):
    def wrap(fn):
        def run(state, cfg):
            try:
                fn(state, cfg)
            except TiStackError as exc:
                raise type(exc)(f"[stage {name}] {exc}") from exc
        run.stage_name = name
        return run
    return wrap


@_stage("harmonize")
def _harmonize(st: _Run, cfg: PipelineConfig) -> None:
    mprage = st.products["raw_mprage"]
    fgatir = st.products["raw_fgatir"]
    if "bias1" in st.products:
        combined = harmonic_bias(st.products["bias1"], st.products["bias2"])
        mprage = apply_bias(mprage, combined)
        fgatir = apply_bias(fgatir, combined)
        st.save("bias_combined", combined)
    brain = st.products.get("mask")
    fcm_mask = brain if brain is not None else mprage.with_data(
        (mprage.data > 0).astype(np.uint8), intent=Intent.LABEL)
    result = fcm(mprage, fcm_mask, c=cfg.fcm_classes, m=cfg.fcm_fuzziness,
                 tol=cfg.fcm_tol, max_iter=cfg.fcm_max_iter)
    wm = wm_mask(result, threshold=cfg.wm_threshold)
    mprage, fgatir, scale = wm_mean_normalize(mprage, fgatir, wm, target=cfg.norm_target)
    st.products["wm_scale"] = scale
    st.save("mprage", mprage)
    st.save("fgatir", fgatir)
    st.save("wm_mask", wm)


@_stage("fit-qmap")
def _fit_qmap(st: _Run, cfg: PipelineConfig) -> None:
    q = fit_qmaps(
        st.products["mprage"], st.products["fgatir"],
        IRAcquisition(tr=cfg.tr, ti=cfg.ti_mprage),
        IRAcquisition(tr=cfg.tr, ti=cfg.ti_fgatir),
        brain_mask=st.products.get("mask"),
        threads=cfg.threads,
    )
    st.products["qmaps"] = q
    st.save("pd", q.pd)
    st.save("t1", q.t1)
    st.save("fit_valid", q.valid_mask)


@_stage("synth-ti")
def _synth_ti(st: _Run, cfg: PipelineConfig) -> None:
    st.save("multi_ti", synth_multi_ti(st.products["qmaps"], cfg.multi_ti))


@_stage("dti-fit")
def _dti_fit(st: _Run, cfg: PipelineConfig) -> None:
    ds = DiffusionSet(dwi=st.products["dwi"], bvals=st.products["bvals"],
                      bvecs=st.products["bvecs"])
    tf = fit_tensor(ds, mask=st.products.get("mask"), max_b=cfg.dti_max_b)
    st.save("tensor", tf.tensor)
    st.save("dti_valid", tf.valid_mask)
    evals, evec1 = eigen_field(tf)
    st.save("evals", evals)
    st.save("evec1", evec1)
    maps = scalar_maps(tf)
    for name in ("ad", "fa", "rd", "trace"):
        st.save(name, maps[name])
    st.save("westin", westin_maps(tf))


@_stage("knutsson")
def _knutsson(st: _Run, cfg: PipelineConfig) -> None:
    k5 = knutsson_field(st.products["evec1"], mask=st.products["dti_valid"])
    st.save("k5", k5)
    st.save("edge", edge_map(k5, presmooth_sigma=cfg.presmooth_sigma))


@_stage("stack")
def _stack(st: _Run, cfg: PipelineConfig) -> None:
    if cfg.manifest is not None:
        def resolve(ref):
            if ref in st.products:
                return st.products[ref]
            return read_nifti(ref)
        manifest = manifest_from_doc(cfg.manifest, resolve)
    else:
        manifest = manifest_from_products(st.products, expected=cfg.expected_channels)
    stacked, provenance = assemble_feature_stack(manifest)
    st.provenance = provenance
    st.save("stack", stacked)
    sidecar = os.path.join(cfg.out_dir, "stack_channels.json")
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True)
        fh.write("\n")
    st.files["stack_channels.json"] = sidecar


@_stage("crop")
def _crop(st: _Run, cfg: PipelineConfig) -> None:
    size = tuple(int(s) for s in cfg.crop_size)
    for name in CROP_PRODUCTS:
        if name not in st.products:
            continue
        vol = st.products[name]
        center = cfg.crop_center or default_crop_center(vol)
        st.save(name, center_crop(vol, size, center), subdir="crop")


_STAGE_FNS = (_harmonize, _fit_qmap, _synth_ti, _dti_fit, _knutsson, _stack, _crop)


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Execute every stage; returns the run log (also written as JSON)."""
    paths = dict(cfg.inputs)
    check_keys = list(REQUIRED_INPUTS) + [k for k in OPTIONAL_INPUTS if k in paths]
    missing = [f"{k} ({paths[k]})" for k in check_keys if not os.path.exists(paths[k])]
    if missing:
        raise FileNotFoundError(f"missing pipeline inputs: {', '.join(missing)}")
    if ("bias1" in paths) != ("bias2" in paths):
        raise ValidationError("bias fields must be supplied as a pair or not at all")

    st = _Run(cfg)
    st.products["raw_mprage"] = read_nifti(paths["mprage"])
    st.products["raw_fgatir"] = read_nifti(paths["fgatir"])
    st.products["dwi"] = read_nifti(paths["dwi"])
    bvals, bvecs = read_bvals_bvecs(paths["bval"], paths["bvec"])
    st.products["bvals"], st.products["bvecs"] = bvals, bvecs
    for key in ("bias1", "bias2", "mask"):
        if key in paths:
            st.products[key] = read_nifti(paths[key])

    os.makedirs(cfg.out_dir, exist_ok=True)
    for fn in _STAGE_FNS:
        fn(st, cfg)

    log = {
        "pipeline": list(STAGES),
        "versions": {
            "tistack": __version__,
            "numpy": np.__version__,
            "fit_kernel": BACKEND,
        },
        "parameters": {
            "tr": cfg.tr,
            "ti_mprage": cfg.ti_mprage,
            "ti_fgatir": cfg.ti_fgatir,
            "multi_ti": [cfg.multi_ti.ti_start, cfg.multi_ti.ti_end, cfg.multi_ti.ti_step],
            "fcm": {
                "classes": cfg.fcm_classes,
                "fuzziness": cfg.fcm_fuzziness,
                "tol": cfg.fcm_tol,
                "max_iter": cfg.fcm_max_iter,
                "wm_threshold": cfg.wm_threshold,
                "target": cfg.norm_target,
            },
            "dti_max_b": cfg.dti_max_b,
            "presmooth_sigma": cfg.presmooth_sigma,
            "crop_size": list(cfg.crop_size),
            "crop_center": None if cfg.crop_center is None else list(cfg.crop_center),
            "wm_scale": st.products.get("wm_scale"),
        },
        "inputs": {k: str(v) for k, v in cfg.inputs.items()},
        "channels": st.provenance,
        "checksums": {
            key: _sha256(path) for key, path in sorted(st.files.items())
        },
    }
    log_path = os.path.join(cfg.out_dir, "run_log.json")
    with open(log_path, "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return log

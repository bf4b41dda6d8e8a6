"""Synthetic ground-truth phantoms for desk-scale pipeline testing.

Piecewise-constant PD/T1/tensor regions on a small grid, imaged through
the inversion-recovery forward model (structural pair), a polynomial bias
field per image, the tensor forward model (DWI), and a seeded Bernoulli
thinning that turns dense labels into sparse ones.

All randomness comes from one PCG64 generator seeded by the spec, drawn
in a fixed order (structural noise, then label thinning), so identical
specs produce identical phantoms everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dti import forward_signals
from .errors import ValidationError
from .qmri import IRAcquisition, ir_signal
from .volume import Intent, Volume

OVERLAP_ERROR = "error"
OVERLAP_PAINT = "paint-order"

DEFAULT_TR = 4000.0
DEFAULT_TI_LONG = 1400.0   # MPRAGE-style
DEFAULT_TI_SHORT = 400.0   # FGATIR-style


@dataclass(frozen=True)
class Region:
    """One piecewise-constant region.

    box: origin = low corner (inclusive), size = edge lengths, half-open.
    ellipsoid: origin = center, size = radii. Units are voxels.
    label 0 means tissue that contributes signal but carries no label.
    """

    shape: str
    origin: tuple[float, float, float]
    size: tuple[float, float, float]
    pd: float
    t1: float
    tensor: tuple[float, float, float, float, float, float]
    label: int = 0

    def __post_init__(self):
        if self.shape not in ("box", "ellipsoid"):
            raise ValidationError(f"unknown region shape {self.shape!r}")
        if len(self.origin) != 3 or len(self.size) != 3:
            raise ValidationError("origin and size must have 3 components")
        if len(self.tensor) != 6:
            raise ValidationError("tensor must have 6 components")
        if self.pd < 0 or self.t1 < 0 or self.label < 0:
            raise ValidationError("pd, t1 and label must be non-negative")
        if any(s <= 0 for s in self.size):
            raise ValidationError("region size must be positive")

    def mask(self, dims) -> np.ndarray:
        ii, jj, kk = np.meshgrid(*(np.arange(n) for n in dims), indexing="ij")
        o, s = self.origin, self.size
        if self.shape == "box":
            return (
                (ii >= o[0]) & (ii < o[0] + s[0])
                & (jj >= o[1]) & (jj < o[1] + s[1])
                & (kk >= o[2]) & (kk < o[2] + s[2])
            )
        return (
            ((ii - o[0]) / s[0]) ** 2
            + ((jj - o[1]) / s[1]) ** 2
            + ((kk - o[2]) / s[2]) ** 2
        ) <= 1.0


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int]
    regions: tuple[Region, ...]
    noise: float = 0.0
    bias1: tuple = ()        # polynomial terms (i, j, k, coeff) in [-1,1]^3 coords
    bias2: tuple = ()
    sparsity: float = 1.0
    seed: int = 0
    overlap: str = OVERLAP_ERROR
    tr: float = DEFAULT_TR
    ti_long: float = DEFAULT_TI_LONG
    ti_short: float = DEFAULT_TI_SHORT
    bvals: tuple = ()        # empty -> default gradient scheme
    bvecs: tuple = ()

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(n) != n or n < 1 for n in self.dims):
            raise ValidationError("dims must be 3 positive integers")
        if not self.regions:
            raise ValidationError("phantom needs at least one region")
        if self.noise < 0:
            raise ValidationError("noise must be >= 0")
        if not 0 < self.sparsity <= 1:
            raise ValidationError("sparsity must lie in (0, 1]")
        if self.overlap not in (OVERLAP_ERROR, OVERLAP_PAINT):
            raise ValidationError(f"unknown overlap policy {self.overlap!r}")
        if bool(len(self.bvals)) != bool(len(self.bvecs)):
            raise ValidationError("bvals and bvecs must be given together")


def fibonacci_directions(n: int) -> np.ndarray:
    """n deterministic, roughly uniform unit vectors (spiral lattice)."""
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = np.pi * (1.0 + np.sqrt(5.0)) * i
    return np.stack(
        [np.sin(polar) * np.cos(azim), np.sin(polar) * np.sin(azim), np.cos(polar)],
        axis=1,
    )


def default_gradients(n_dirs: int = 12, b: float = 1000.0,
                      n_b0: int = 2) -> tuple[np.ndarray, np.ndarray]:
    bvals = np.concatenate([np.zeros(n_b0), np.full(n_dirs, float(b))])
    bvecs = np.concatenate([np.zeros((n_b0, 3)), fibonacci_directions(n_dirs)])
    return bvals, bvecs


def _poly_field(dims, terms) -> np.ndarray:
    axes = [
        np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
        for n in dims
    ]
    u, v, w = np.meshgrid(*axes, indexing="ij")
    if not len(terms):
        return np.ones(dims)
    out = np.zeros(dims)
    for i, j, k, coeff in terms:
        out += float(coeff) * u ** int(i) * v ** int(j) * w ** int(k)
    if np.any(out <= 0) or not np.all(np.isfinite(out)):
        raise ValidationError("bias polynomial must be positive everywhere")
    return out


def _volume(data, intent=Intent.INTENSITY) -> Volume:
    return Volume(np.asarray(data), spacing=(1.0, 1.0, 1.0),
                  affine=np.eye(4), intent=intent)


def generate_phantom(spec: PhantomSpec) -> dict:
    """All phantom products on one unit-spacing grid; see module docstring."""
    dims = tuple(int(n) for n in spec.dims)
    pd = np.zeros(dims)
    t1 = np.zeros(dims)
    tensors = np.zeros(dims + (6,))
    dense = np.zeros(dims, dtype=np.int32)

    covered = np.zeros(dims, dtype=bool)
    for idx, region in enumerate(spec.regions):
        m = region.mask(dims)
        if spec.overlap == OVERLAP_ERROR and np.any(m & covered):
            raise ValidationError(
                f"region {idx} overlaps an earlier region; set overlap "
                f"policy {OVERLAP_PAINT!r} to paint in list order"
            )
        covered |= m
        pd[m] = region.pd
        t1[m] = region.t1
        tensors[m] = np.asarray(region.tensor, dtype=np.float64)
        dense[m] = region.label

    bias1 = _poly_field(dims, spec.bias1)
    bias2 = _poly_field(dims, spec.bias2)

    acq_long = IRAcquisition(tr=spec.tr, ti=spec.ti_long)
    acq_short = IRAcquisition(tr=spec.tr, ti=spec.ti_short)
    mprage = ir_signal(pd, t1, acq_long) * bias1
    fgatir = ir_signal(pd, t1, acq_short) * bias2

    rng = np.random.Generator(np.random.PCG64(spec.seed))
    # fixed draw order keeps the stream layout independent of parameter values
    noise_long = rng.standard_normal(dims)
    noise_short = rng.standard_normal(dims)
    keep = rng.random(dims) < spec.sparsity
    if spec.noise > 0:
        mprage = mprage + spec.noise * noise_long
        fgatir = fgatir + spec.noise * noise_short

    sparse = np.where(keep, dense, 0).astype(np.int32)

    if len(spec.bvals):
        bvals = np.asarray(spec.bvals, dtype=np.float64)
        bvecs = np.asarray(spec.bvecs, dtype=np.float64)
    else:
        bvals, bvecs = default_gradients()
    dwi = forward_signals(tensors, pd, bvals, bvecs)

    return {
        "mprage": _volume(mprage),
        "fgatir": _volume(fgatir),
        "bias1": _volume(bias1),
        "bias2": _volume(bias2),
        "dwi": _volume(dwi),
        "bvals": bvals,
        "bvecs": bvecs,
        "labels_dense": _volume(dense, Intent.LABEL),
        "labels_sparse": _volume(sparse, Intent.LABEL),
        "pd": _volume(pd),
        "t1": _volume(t1),
        "tensors": _volume(tensors),
        "mask": _volume((pd > 0).astype(np.uint8), Intent.LABEL),
    }


def spec_from_doc(doc: dict) -> PhantomSpec:
    try:
        regions = tuple(
            Region(
                shape=r["shape"],
                origin=tuple(float(x) for x in r["origin"]),
                size=tuple(float(x) for x in r["size"]),
                pd=float(r["pd"]),
                t1=float(r["t1"]),
                tensor=tuple(float(x) for x in r["tensor"]),
                label=int(r.get("label", 0)),
            )
            for r in doc["regions"]
        )
        return PhantomSpec(
            dims=tuple(int(n) for n in doc["dims"]),
            regions=regions,
            noise=float(doc.get("noise", 0.0)),
            bias1=tuple(tuple(t) for t in doc.get("bias1", ())),
            bias2=tuple(tuple(t) for t in doc.get("bias2", ())),
            sparsity=float(doc.get("sparsity", 1.0)),
            seed=int(doc.get("seed", 0)),
            overlap=doc.get("overlap", OVERLAP_ERROR),
            tr=float(doc.get("tr", DEFAULT_TR)),
            ti_long=float(doc.get("ti_long", DEFAULT_TI_LONG)),
            ti_short=float(doc.get("ti_short", DEFAULT_TI_SHORT)),
            bvals=tuple(doc.get("bvals", ())),
            bvecs=tuple(tuple(v) for v in doc.get("bvecs", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed phantom spec: {exc}") from exc


def spec_to_doc(spec: PhantomSpec) -> dict:
    return {
        "dims": list(spec.dims),
        "regions": [
            {
                "shape": r.shape,
                "origin": list(r.origin),
                "size": list(r.size),
                "pd": r.pd,
                "t1": r.t1,
                "tensor": list(r.tensor),
                "label": r.label,
            }
            for r in spec.regions
        ],
        "noise": spec.noise,
        "bias1": [list(t) for t in spec.bias1],
        "bias2": [list(t) for t in spec.bias2],
        "sparsity": spec.sparsity,
        "seed": spec.seed,
        "overlap": spec.overlap,
        "tr": spec.tr,
        "ti_long": spec.ti_long,
        "ti_short": spec.ti_short,
        "bvals": list(spec.bvals),
        "bvecs": [list(v) for v in spec.bvecs],
    }


def load_spec(path) -> PhantomSpec:
    with open(path, encoding="utf-8") as fh:
        return spec_from_doc(json.load(fh))


_AXIS_TENSORS = {
    # prolate tensors (principal direction x, y, z), mm^2/s
    0: (1.7e-3, 4.0e-4, 4.0e-4, 0.0, 0.0, 0.0),
    1: (4.0e-4, 1.7e-3, 4.0e-4, 0.0, 0.0, 0.0),
    2: (4.0e-4, 4.0e-4, 1.7e-3, 0.0, 0.0, 0.0),
}

_ISO_TENSOR = (7.0e-4, 7.0e-4, 7.0e-4, 0.0, 0.0, 0.0)


def nuclei_spec(dims=(48, 48, 48), n_labels: int = 13, noise: float = 0.0,
                sparsity: float = 1.0, seed: int = 0, bias: bool = False) -> PhantomSpec:
    """Convenience spec: an unlabeled tissue ellipsoid holding n_labels boxes.

    Boxes vary in PD, T1 and tensor orientation so every feature channel
    carries class information. Deterministic layout on a 3x3x2 lattice.
    """
    dims = tuple(int(n) for n in dims)
    if n_labels < 1 or n_labels > 18:
        raise ValidationError("n_labels must be in [1, 18]")
    cx, cy, cz = (d / 2.0 for d in dims)
    shell = Region(
        shape="ellipsoid",
        origin=(cx - 0.5, cy - 0.5, cz - 0.5),
        size=(dims[0] * 0.42, dims[1] * 0.42, dims[2] * 0.42),
        pd=100.0, t1=1000.0, tensor=_ISO_TENSOR, label=0,
    )
    regions = [shell]
    # lattice of box centers inside the shell
    xs = [dims[0] * f for f in (0.32, 0.50, 0.68)]
    ys = [dims[1] * f for f in (0.32, 0.50, 0.68)]
    zs = [dims[2] * f for f in (0.40, 0.60)]
    side = max(2.0, round(min(dims) * 0.11))
    code = 1
    for z in zs:
        for y in ys:
            for x in xs:
                if code > n_labels:
                    break
                regions.append(Region(
                    shape="box",
                    origin=(x - side / 2, y - side / 2, z - side / 2),
                    size=(side, side, side),
                    pd=80.0 + 5.0 * (code % 7),
                    t1=500.0 + 180.0 * (code % 9),
                    tensor=_AXIS_TENSORS[code % 3],
                    label=code,
                ))
                code += 1
    bias_terms = ((0, 0, 0, 1.0), (1, 0, 0, 0.08), (0, 1, 0, -0.05), (0, 0, 2, 0.06))
    return PhantomSpec(
        dims=dims,
        regions=tuple(regions),
        noise=noise,
        bias1=bias_terms if bias else (),
        bias2=((0, 0, 0, 1.0), (0, 1, 1, 0.07), (2, 0, 0, 0.05)) if bias else (),
        sparsity=sparsity,
        seed=seed,
        overlap=OVERLAP_PAINT,
    )

"""Diffusion tensor fitting and scalar feature maps.

Fitting is log-linear weighted least squares with one reweighting pass:
an ordinary pass on log-signals, then weights equal to the squared
predicted signals. Non-positive samples are dropped per voxel; a voxel
with fewer than 7 usable samples (6 tensor components + S0) is invalid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, ValidationError
from .volume import Intent, Volume, check_same_grid

TENSOR_CHANNELS = ("dxx", "dyy", "dzz", "dxy", "dxz", "dyz")
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DiffusionSet:
    """4D DWI volume with per-channel b-values and unit gradient directions."""

    dwi: Volume
    bvals: np.ndarray
    bvecs: np.ndarray  # (N, 3); zero rows allowed for b=0

    def __post_init__(self):
        object.__setattr__(self, "bvals", np.asarray(self.bvals, dtype=np.float64))
        object.__setattr__(self, "bvecs", np.asarray(self.bvecs, dtype=np.float64))
        n = self.dwi.n_channels
        if self.dwi.data.ndim != 4:
            raise ValidationError("dwi must be 4D")
        if self.bvals.shape != (n,) or self.bvecs.shape != (n, 3):
            raise ValidationError(
                f"bvals/bvecs shapes {self.bvals.shape}/{self.bvecs.shape} "
                f"do not match {n} DWI channels"
            )
        if n < 7:
            raise ValidationError(f"need at least 7 DWI channels, got {n}")
        if np.any(self.bvals < 0):
            raise ValidationError("b-values must be non-negative")
        norms = np.linalg.norm(self.bvecs, axis=1)
        weighted = self.bvals > 0
        if np.any(np.abs(norms[weighted] - 1.0) > 1e-3):
            raise ValidationError("gradient directions for b > 0 must be unit vectors")


@dataclass(frozen=True)
class TensorField:
    """Per-voxel symmetric tensor (6 unique components), log S0, validity."""

    tensor: Volume    # 4D, channels ordered per TENSOR_CHANNELS
    log_s0: Volume
    valid_mask: Volume

    def __post_init__(self):
        check_same_grid(self.tensor, self.log_s0, ("tensor", "log_s0"))
        check_same_grid(self.tensor, self.valid_mask, ("tensor", "valid"))
        if self.tensor.n_channels != 6:
            raise ValidationError("tensor volume must have 6 channels")


@dataclass(frozen=True)
class EigenSystem:
    """Descending eigenvalues and matching orthonormal eigenvectors."""

    eigenvalues: np.ndarray   # (3,), lam1 >= lam2 >= lam3
    eigenvectors: np.ndarray  # (3, 3), rows e1, e2, e3


def design_matrix(bvals, bvecs) -> np.ndarray:
    """N x 7 log-linear design: ln S = ln S0 - b g^T D g."""
    bvals = np.asarray(bvals, dtype=np.float64)
    g = np.asarray(bvecs, dtype=np.float64)
    b = bvals[:, None]
    cols = [
        -b[:, 0] * g[:, 0] ** 2,
        -b[:, 0] * g[:, 1] ** 2,
        -b[:, 0] * g[:, 2] ** 2,
        -2 * b[:, 0] * g[:, 0] * g[:, 1],
        -2 * b[:, 0] * g[:, 0] * g[:, 2],
        -2 * b[:, 0] * g[:, 1] * g[:, 2],
        np.ones(len(bvals)),
    ]
    return np.stack(cols, axis=1)


def _weighted_solve(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Batched weighted LLS. y, w: (M, N); returns beta (M, 7) and a validity mask."""
    a = np.einsum("ni,mn,nj->mij", x, w, x)
    rhs = np.einsum("ni,mn,mn->mi", x, w, y)
    sv = np.linalg.svd(a, compute_uv=False)
    ok = (sv[:, -1] > 0) & (sv[:, 0] / np.where(sv[:, -1] > 0, sv[:, -1], 1.0) < _COND_LIMIT)
    beta = np.zeros((y.shape[0], x.shape[1]))
    if np.any(ok):
        beta[ok] = np.linalg.solve(a[ok], rhs[ok][..., None])[..., 0]
    return beta, ok


def fit_tensor(ds: DiffusionSet, mask: Volume | None = None,
               max_b: float | None = None) -> TensorField:
    """Fit the tensor field; per-voxel failures flow into valid_mask, never raise."""
    keep = np.ones(len(ds.bvals), dtype=bool)
    if max_b is not None:
        keep = ds.bvals <= max_b
    x = design_matrix(ds.bvals[keep], ds.bvecs[keep])
    if np.linalg.matrix_rank(x) < 7:
        raise NumericalError(
            "design matrix rank < 7; the gradient scheme cannot determine a tensor"
        )
    if mask is not None:
        check_same_grid(ds.dwi, mask, ("dwi", "mask"))

    shape = ds.dwi.spatial_dims
    signals = ds.dwi.data.reshape(-1, ds.dwi.n_channels)[:, keep].astype(np.float64)
    if mask is not None:
        sel = np.flatnonzero(mask.data.ravel() > 0)
    else:
        sel = np.arange(signals.shape[0])
    s = signals[sel]

    usable = (s > 0) & np.isfinite(s)
    enough = usable.sum(axis=1) >= 7
    logs = np.where(usable, np.log(np.where(usable, s, 1.0)), 0.0)
    w0 = usable.astype(np.float64)

    beta0, ok0 = _weighted_solve(x, logs, w0)
    pred = beta0 @ x.T
    w1 = np.where(usable, np.exp(2.0 * np.clip(pred, -700.0, 700.0)), 0.0)
    beta1, ok1 = _weighted_solve(x, logs, w1)

    good = enough & ok0 & ok1 & np.all(np.isfinite(beta1), axis=1)
    beta1[~good] = 0.0

    tensor_flat = np.zeros((signals.shape[0], 6))
    logs0_flat = np.zeros(signals.shape[0])
    valid_flat = np.zeros(signals.shape[0], dtype=np.uint8)
    tensor_flat[sel] = beta1[:, :6]
    logs0_flat[sel] = beta1[:, 6]
    valid_flat[sel] = good.astype(np.uint8)

    return TensorField(
        tensor=ds.dwi.with_data(tensor_flat.reshape(shape + (6,))),
        log_s0=ds.dwi.with_data(logs0_flat.reshape(shape)),
        valid_mask=ds.dwi.with_data(valid_flat.reshape(shape), intent=Intent.LABEL),
    )


def _as_matrices(components: np.ndarray) -> np.ndarray:
    """(..., 6) unique components -> (..., 3, 3) symmetric matrices."""
    dxx, dyy, dzz, dxy, dxz, dyz = np.moveaxis(components, -1, 0)
    mat = np.empty(components.shape[:-1] + (3, 3))
    mat[..., 0, 0] = dxx
    mat[..., 1, 1] = dyy
    mat[..., 2, 2] = dzz
    mat[..., 0, 1] = mat[..., 1, 0] = dxy
    mat[..., 0, 2] = mat[..., 2, 0] = dxz
    mat[..., 1, 2] = mat[..., 2, 1] = dyz
    return mat


def _fix_sign(vectors: np.ndarray) -> np.ndarray:
    """Deterministic orientation: largest-|component| entry made non-negative.

    vectors: (..., 3, n) columns. Ties resolve to the first maximal index.
    """
    comp = np.abs(vectors)
    idx = np.argmax(comp, axis=-2)
    picked = np.take_along_axis(vectors, idx[..., None, :], axis=-2)[..., 0, :]
    return vectors * np.where(picked < 0, -1.0, 1.0)[..., None, :]


def eig3_sym(matrix: np.ndarray) -> EigenSystem:
    """Eigendecomposition of one symmetric 3x3 matrix, descending order."""
    matrix = np.asarray(matrix, dtype=np.float64)
    vals, vecs = np.linalg.eigh(matrix)
    vals = vals[::-1]
    vecs = vecs[:, ::-1]
    vecs = _fix_sign(vecs)
    return EigenSystem(eigenvalues=vals, eigenvectors=vecs.T)


def eigen_field(ts: TensorField) -> tuple[Volume, Volume]:
    """Volume-level eigendecomposition: (eigenvalues 3ch, principal direction 3ch)."""
    mats = _as_matrices(ts.tensor.data)
    vals, vecs = np.linalg.eigh(mats.reshape(-1, 3, 3))
    vals = vals[:, ::-1]
    vecs = _fix_sign(vecs[:, :, ::-1])
    invalid = ts.valid_mask.data.ravel() == 0
    vals[invalid] = 0.0
    e1 = vecs[:, :, 0]
    e1[invalid] = 0.0
    shape = ts.tensor.spatial_dims
    return (
        ts.tensor.with_data(vals.reshape(shape + (3,))),
        ts.tensor.with_data(e1.reshape(shape + (3,)), intent=Intent.VECTOR),
    )


def scalar_maps(ts: TensorField) -> dict[str, Volume]:
    """FA, Trace, AD, RD, and the three eigenvalue maps.

    Eigenvalues are clamped to >= 0 first so FA stays in [0, 1] and the
    Westin measures stay defined; the raw tensor keeps any negative values
    for diagnostics.
    """
    evals_vol, _ = eigen_field(ts)
    lam = np.maximum(evals_vol.data, 0.0)
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]

    trace = l1 + l2 + l3
    mean = trace / 3.0
    dev_sq = (l1 - mean) ** 2 + (l2 - mean) ** 2 + (l3 - mean) ** 2
    norm_sq = l1**2 + l2**2 + l3**2
    with np.errstate(invalid="ignore", divide="ignore"):
        fa = np.sqrt(1.5) * np.sqrt(np.where(norm_sq > 0, dev_sq / np.where(norm_sq > 0, norm_sq, 1.0), 0.0))
    fa = np.where(norm_sq > 0, fa, 0.0)

    out = {
        "fa": fa,
        "trace": trace,
        "ad": l1,
        "rd": (l2 + l3) / 2.0,
        "l1": l1,
        "l2": l2,
        "l3": l3,
    }
    return {k: ts.tensor.with_data(v) for k, v in out.items()}


def westin(l1, l2, l3):
    """Linear/planar/spherical shape measures, normalized by the largest eigenvalue.

    All three are 0 where l1 <= 0 (by convention); elsewhere they sum to 1.
    """
    l1 = np.asarray(l1, dtype=np.float64)
    l2 = np.asarray(l2, dtype=np.float64)
    l3 = np.asarray(l3, dtype=np.float64)
    safe = np.where(l1 > 0, l1, 1.0)
    wl = np.where(l1 > 0, (l1 - l2) / safe, 0.0)
    wp = np.where(l1 > 0, (l2 - l3) / safe, 0.0)
    ws = np.where(l1 > 0, l3 / safe, 0.0)
    if wl.ndim == 0:
        return float(wl), float(wp), float(ws)
    return wl, wp, ws


def westin_maps(ts: TensorField) -> Volume:
    """3-channel Westin volume (WL, WP, WS) from clamped eigenvalues."""
    evals_vol, _ = eigen_field(ts)
    lam = np.maximum(evals_vol.data, 0.0)
    wl, wp, ws = westin(lam[..., 0], lam[..., 1], lam[..., 2])
    return ts.tensor.with_data(np.stack([wl, wp, ws], axis=-1))


def read_bvals_bvecs(bval_path, bvec_path) -> tuple[np.ndarray, np.ndarray]:
    """FSL-style text files: b-values on one line, directions as 3 rows."""
    bvals = np.loadtxt(bval_path, ndmin=1, dtype=np.float64)
    bvecs = np.loadtxt(bvec_path, ndmin=2, dtype=np.float64)
    if bvecs.shape[0] == 3 and bvecs.shape != (3, 3):
        bvecs = bvecs.T
    elif bvecs.shape == (3, 3):
        # ambiguous 3x3: rows-as-samples only if each row is unit or zero
        norms = np.linalg.norm(bvecs, axis=1)
        if not np.all((np.abs(norms - 1) < 1e-3) | (norms < 1e-12)):
            bvecs = bvecs.T
    if bvecs.shape != (len(bvals), 3):
        raise InputError(
            f"bvec table {bvecs.shape} does not match {len(bvals)} b-values"
        )
    return bvals, bvecs


def write_bvals_bvecs(bval_path, bvec_path, bvals, bvecs) -> None:
    bvals = np.asarray(bvals, dtype=np.float64)
    bvecs = np.asarray(bvecs, dtype=np.float64)
    with open(bval_path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(format(v, ".17g") for v in bvals) + "\n")
    with open(bvec_path, "w", encoding="utf-8") as fh:
        for row in bvecs.T:
            fh.write(" ".join(format(v, ".17g") for v in row) + "\n")


def forward_signals(tensor6: np.ndarray, s0, bvals, bvecs) -> np.ndarray:
    """Noise-free DWI signals S = S0 exp(-b g^T D g) for given tensors.

    tensor6: (..., 6) per TENSOR_CHANNELS; returns (..., N).
    """
    x = design_matrix(bvals, bvecs)
    tensor6 = np.asarray(tensor6, dtype=np.float64)
    s0 = np.asarray(s0, dtype=np.float64)
    expo = tensor6 @ x[:, :6].T
    return s0[..., None] * np.exp(expo)

"""Joint bias handling and white-matter mean normalization.

The two input images share one multiplicative gain field (the geometric
mean of their individually estimated bias fields) and one scaling factor,
so the voxelwise FGATIR/MPRAGE ratio is preserved: adjusting the images
separately would corrupt the downstream PD/T1 fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError
from .volume import Intent, Volume, check_same_grid


@dataclass(frozen=True)
class FcmResult:
    """Converged fuzzy C-means state on a masked intensity image."""

    centroids: np.ndarray          # ascending
    memberships: Volume            # 4D, one channel per class, zero off-mask
    fuzziness: float
    iterations: int
    objective: float
    objective_history: np.ndarray  # one value per iteration, non-increasing


def _check_bias(b: Volume, name: str) -> None:
    data = b.data
    if not np.all(np.isfinite(data)) or np.any(data <= 0):
        raise ValidationError(f"{name} must be strictly positive and finite")


def harmonic_bias(b1: Volume, b2: Volume) -> Volume:
    """Voxelwise geometric mean of two multiplicative gain fields."""
    check_same_grid(b1, b2, ("bias1", "bias2"))
    _check_bias(b1, "bias1")
    _check_bias(b2, "bias2")
    return b1.with_data(np.sqrt(b1.data.astype(np.float64) * b2.data))


def apply_bias(img: Volume, b: Volume) -> Volume:
    """Divide an image by a gain field."""
    check_same_grid(img, b, ("image", "bias"))
    _check_bias(b, "bias")
    return img.with_data(img.data.astype(np.float64) / b.data)


def fcm(
    img: Volume,
    mask: Volume,
    c: int = 3,
    m: float = 2.0,
    tol: float = 1e-4,
    max_iter: int = 200,
) -> FcmResult:
    """Fuzzy C-means on in-mask intensities.

    Deterministic: centroids start at fixed in-mask intensity percentiles
    (10/50/90 for the default c=3, evenly spread within [10, 90] otherwise)
    and the alternating updates are seed-free. Voxels that hit a centroid
    exactly get crisp membership.
    """
    if c < 2:
        raise ValidationError(f"need at least 2 classes, got {c}")
    if m <= 1:
        raise ValidationError(f"fuzziness must be > 1, got {m}")
    check_same_grid(img, mask, ("image", "mask"))
    in_mask = mask.data > 0
    x = img.data[in_mask].astype(np.float64)
    if x.size == 0:
        raise InputError("mask is empty")
    if np.unique(x).size < c:
        raise InputError(
            f"{np.unique(x).size} distinct in-mask intensities cannot support {c} classes"
        )

    percentiles = np.linspace(10.0, 90.0, c)
    centroids = np.percentile(x, percentiles)
    # exact percentile collisions would stall the updates
    for k in range(1, c):
        if centroids[k] <= centroids[k - 1]:
            centroids[k] = centroids[k - 1] + max(1e-12, 1e-6 * np.ptp(x))

    exponent = 2.0 / (m - 1.0)
    u = np.empty((x.size, c))
    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        dist = np.abs(x[:, None] - centroids[None, :])
        zero_hit = dist == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = dist ** (-exponent)
            u = inv / np.sum(inv, axis=1, keepdims=True)
        rows_hit = zero_hit.any(axis=1)
        if np.any(rows_hit):
            u[rows_hit] = 0.0
            first_hit = np.argmax(zero_hit[rows_hit], axis=1)
            u[np.flatnonzero(rows_hit), first_hit] = 1.0

        um = u**m
        new_centroids = (um.T @ x) / np.sum(um, axis=0)
        history.append(float(np.sum(um * (x[:, None] - new_centroids[None, :]) ** 2)))

        shift = np.max(np.abs(new_centroids - centroids))
        centroids = new_centroids
        if shift < tol:
            break

    order = np.argsort(centroids)
    centroids = centroids[order]
    u = u[:, order]

    mem = np.zeros(img.spatial_dims + (c,), dtype=np.float64)
    mem[in_mask] = u
    return FcmResult(
        centroids=centroids,
        memberships=img.with_data(mem, intent=Intent.INTENSITY),
        fuzziness=m,
        iterations=iterations,
        objective=history[-1],
        objective_history=np.array(history),
    )


def wm_mask(f: FcmResult, threshold: float = 0.5) -> Volume:
    """Binary mask of the highest-centroid class (white matter on MPRAGE)."""
    wm_channel = int(np.argmax(f.centroids))
    mask = (f.memberships.data[..., wm_channel] > threshold).astype(np.uint8)
    return f.memberships.with_data(mask, intent=Intent.LABEL)


def wm_mean_normalize(
    mprage: Volume,
    fgatir: Volume,
    wm: Volume,
    target: float = 1000.0,
) -> tuple[Volume, Volume, float]:
    """Scale both images by target / mean(MPRAGE over WM).

    One shared factor: the FGATIR/MPRAGE ratio is untouched.
    """
    check_same_grid(mprage, fgatir, ("mprage", "fgatir"))
    check_same_grid(mprage, wm, ("mprage", "wm mask"))
    in_wm = wm.data > 0
    if not np.any(in_wm):
        raise InputError("white-matter mask is empty")
    mean_wm = float(np.mean(mprage.data[in_wm]))
    if mean_wm <= 0:
        raise InputError(f"non-positive white-matter mean {mean_wm}")
    scale = target / mean_wm
    return (
        mprage.with_data(mprage.data * scale),
        fgatir.with_data(fgatir.data * scale),
        scale,
    )

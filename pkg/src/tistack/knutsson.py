"""Orientation mapping for principal diffusion directions.

Maps each 3D orientation (sign-ambiguous unit vector) to a 5D vector with
constant norm 2/sqrt(3), removing the antipodal ambiguity, then derives an
edge map as the spatial gradient magnitude of the 5-channel field.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import gaussian_filter

from .volume import Intent, Volume, check_same_grid

K_NORM = 2.0 / np.sqrt(3.0)


def knutsson_map(v: np.ndarray) -> np.ndarray:
    """(..., 3) orientations -> (..., 5). Even in v, so K(v) = K(-v) bit-exact.

    Nonzero inputs are normalized first; zero vectors map to zero.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    unit = np.where(norm > 0, v / np.where(norm > 0, norm, 1.0), 0.0)
    x, y, z = unit[..., 0], unit[..., 1], unit[..., 2]
    return np.stack(
        [
            x * x - y * y,
            2.0 * x * y,
            2.0 * x * z,
            2.0 * y * z,
            (2.0 * z * z - x * x - y * y) / np.sqrt(3.0),
        ],
        axis=-1,
    )


def knutsson_field(orientations: Volume, mask: Volume | None = None) -> Volume:
    """Voxelwise mapping of a 3-channel direction volume; out-of-mask -> zero."""
    if orientations.n_channels != 3:
        from .errors import ValidationError

        raise ValidationError("orientation field must have 3 channels")
    k5 = knutsson_map(orientations.data)
    if mask is not None:
        check_same_grid(orientations, mask, ("orientations", "mask"))
        k5 = np.where((mask.data > 0)[..., None], k5, 0.0)
    return orientations.with_data(k5, intent=Intent.VECTOR)


def _shift_replicate(arr: np.ndarray, axis: int, step: int) -> np.ndarray:
    idx = np.clip(np.arange(arr.shape[axis]) + step, 0, arr.shape[axis] - 1)
    return np.take(arr, idx, axis=axis)


def edge_map(k5: Volume, presmooth_sigma: float | None = None) -> Volume:
    """Frobenius norm of the spatial Jacobian of the 5-channel field.

    Central differences in voxel units with replicate boundary. Zero
    5-vectors are background: they are replicated over like out-of-volume
    samples (so mask boundaries produce no edge) and get edge value 0.
    """
    data = np.asarray(k5.data, dtype=np.float64)
    if data.ndim != 4 or data.shape[-1] != 5:
        from .errors import ValidationError

        raise ValidationError("edge_map expects a 5-channel field")
    fg = np.any(data != 0, axis=-1)
    if presmooth_sigma is not None and presmooth_sigma > 0:
        data = np.stack(
            [gaussian_filter(data[..., c], presmooth_sigma, mode="nearest") for c in range(5)],
            axis=-1,
        )
    acc = np.zeros(data.shape[:3])
    for axis in range(3):
        fwd_ok = _shift_replicate(fg, axis, +1)[..., None]
        bwd_ok = _shift_replicate(fg, axis, -1)[..., None]
        fwd = np.where(fwd_ok, _shift_replicate(data, axis, +1), data)
        bwd = np.where(bwd_ok, _shift_replicate(data, axis, -1), data)
        diff = (fwd - bwd) / 2.0
        acc += np.sum(diff * diff, axis=-1)
    edge = np.sqrt(acc)
    edge[~fg] = 0.0
    return k5.with_data(edge, intent=Intent.INTENSITY)

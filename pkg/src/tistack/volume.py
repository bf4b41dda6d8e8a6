"""Volume container, grid signatures, and the fixed-size center crop.

A Volume is an immutable-by-convention carrier for every image in the
pipeline: 3D scalar grids or 4D multi-channel grids, with voxel spacing and
a 4x4 grid-to-world affine in mm. Arrays are indexed [x, y, z] or
[x, y, z, c]; serialization order is handled by the NIfTI layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import GridMismatchError, ValidationError

AFFINE_TOL = 1e-4


class Intent(Enum):
    INTENSITY = "intensity"
    LABEL = "label"
    VECTOR = "vector-channel"


@dataclass(frozen=True)
class GridSignature:
    """Spatial fingerprint of a volume: dims, spacing, and affine."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]
    affine: np.ndarray

    def matches(self, other: "GridSignature", tol: float = AFFINE_TOL) -> bool:
        """Compatibility check; `tol` is absolute on affine entries."""
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=0.0, atol=tol)
            and np.allclose(self.affine, other.affine, rtol=0.0, atol=tol)
        )


@dataclass(frozen=True)
class Volume:
    """3D or 4D scalar grid with world geometry.

    data: array indexed [x, y, z] or [x, y, z, c]
    spacing: mm per voxel along the three spatial axes
    affine: 4x4 grid-to-world transform (mm)
    intent: intensity, label, or vector-channel
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    affine: np.ndarray = field(default_factory=lambda: np.eye(4))
    intent: Intent = Intent.INTENSITY

    def __post_init__(self):
        data = np.asarray(self.data)
        object.__setattr__(self, "data", data)
        affine = np.asarray(self.affine, dtype=np.float64)
        object.__setattr__(self, "affine", affine)
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))
        if data.ndim not in (3, 4):
            raise ValidationError(f"volume must be 3D or 4D, got {data.ndim}D")
        if any(n < 1 for n in data.shape):
            raise ValidationError(f"all dims must be >= 1, got {data.shape}")
        if len(self.spacing) != 3 or any(s <= 0 for s in self.spacing):
            raise ValidationError(f"spacing must be 3 positive values, got {self.spacing}")
        if affine.shape != (4, 4):
            raise ValidationError(f"affine must be 4x4, got {affine.shape}")
        if abs(np.linalg.det(affine[:3, :3])) < 1e-12:
            raise ValidationError("affine upper-left 3x3 block is singular")
        if self.intent is Intent.LABEL:
            if not np.issubdtype(data.dtype, np.integer):
                # float payloads only pass if they hold exact non-negative ints
                if not np.all(data == np.floor(data)):
                    raise ValidationError("label volume holds non-integer values")
            if data.size and data.min() < 0:
                raise ValidationError("label volume holds negative codes")

    @property
    def dims(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def spatial_dims(self) -> tuple[int, int, int]:
        return self.data.shape[:3]

    @property
    def n_channels(self) -> int:
        return self.data.shape[3] if self.data.ndim == 4 else 1

    def grid(self) -> GridSignature:
        return GridSignature(self.spatial_dims, self.spacing, self.affine)

    def with_data(self, data: np.ndarray, intent: Intent | None = None) -> "Volume":
        """New volume on the same grid (channel count may differ)."""
        if data.shape[:3] != self.spatial_dims:
            raise ValidationError(
                f"replacement data shape {data.shape[:3]} != grid {self.spatial_dims}"
            )
        return replace(self, data=data, intent=intent or self.intent)

    def voxel_to_world(self, index) -> np.ndarray:
        """Map a voxel index (3 values) to world mm coordinates."""
        h = np.array([index[0], index[1], index[2], 1.0])
        return (self.affine @ h)[:3]


def check_same_grid(a: Volume, b: Volume, names: tuple[str, str] = ("first", "second"),
                    tol: float = AFFINE_TOL) -> None:
    if not a.grid().matches(b.grid(), tol=tol):
        raise GridMismatchError(
            f"{names[0]} (dims {a.spatial_dims}) and {names[1]} (dims {b.spatial_dims}) "
            f"are not on the same grid"
        )


def center_crop(v: Volume, size, center_voxel) -> Volume:
    """Crop a box of `size` voxels centered at `center_voxel`.

    The affine is translated so retained voxels keep their world coordinates.
    The box must lie fully inside the grid; there is no implicit padding.
    """
    size = tuple(int(s) for s in size)
    center = tuple(int(c) for c in center_voxel)
    if len(size) != 3 or len(center) != 3:
        raise ValidationError("size and center_voxel must each have 3 components")
    if any(s < 1 for s in size):
        raise ValidationError(f"crop size must be positive, got {size}")
    start = tuple(c - s // 2 for c, s in zip(center, size))
    stop = tuple(st + s for st, s in zip(start, size))
    for ax in range(3):
        if start[ax] < 0 or stop[ax] > v.spatial_dims[ax]:
            raise ValidationError(
                f"crop box [{start[ax]}, {stop[ax]}) exceeds axis {ax} "
                f"bounds [0, {v.spatial_dims[ax]})"
            )
    sl = (slice(start[0], stop[0]), slice(start[1], stop[1]), slice(start[2], stop[2]))
    data = v.data[sl].copy()
    affine = v.affine.copy()
    affine[:3, 3] = v.voxel_to_world(start)
    return replace(v, data=data, affine=affine)


def default_crop_center(v: Volume) -> tuple[int, int, int]:
    """Grid midpoint, used when no crop center is configured."""
    return tuple(n // 2 for n in v.spatial_dims)

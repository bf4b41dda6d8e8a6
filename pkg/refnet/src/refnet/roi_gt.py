"""Foreground (ROI) ground truth from a nuclei label volume."""
import numpy as np
from scipy.ndimage import binary_fill_holes


def make_roi_gt(labels: np.ndarray) -> np.ndarray:
    """Binarize a label volume and fill fully enclosed background cavities.

    A background voxel is filled iff no 6-connected path links it to the
    volume border, so the external shape of the labeled set is untouched.
    Returns uint8; idempotent.
    """
    labels = np.asarray(labels)
    if labels.ndim != 3:
        raise ValueError(f"labels must be 3D, got {labels.ndim}D")
    binary = labels != 0
    if not binary.any():
        raise ValueError("label volume has no labeled voxels")
    return binary_fill_holes(binary).astype(np.uint8)

"""Subject loading and dataset split helpers.

Feature stacks and label volumes arrive as NIfTI files written by the
producing CLI; channel manifests arrive as its JSON sidecars. Arrays are
rearranged channels-first for training.
"""
import json

import numpy as np

from .niftiio import read_volume


def load_stack(path):
    """Read a 4D feature stack; returns (data (C, X, Y, Z) float32, affine)."""
    data, affine = read_volume(path)
    if data.ndim != 4:
        raise ValueError(f"{path}: expected a 4D feature stack, got {data.ndim}D")
    return np.ascontiguousarray(np.moveaxis(data, -1, 0), dtype=np.float32), affine


def load_labels(path):
    """Read a 3D integer label volume; returns (data int32, affine)."""
    data, affine = read_volume(path)
    if data.ndim != 3:
        raise ValueError(f"{path}: expected a 3D label volume, got {data.ndim}D")
    if not np.issubdtype(data.dtype, np.integer):
        rounded = np.rint(data)
        if not np.array_equal(rounded, data):
            raise ValueError(f"{path}: label volume has non-integer values")
        data = rounded
    return data.astype(np.int32), affine


def manifest_channels(path) -> int:
    """Channel count from a stack provenance sidecar (a JSON list with one
    entry per channel)."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list) or not doc:
        raise ValueError(f"{path}: expected a non-empty JSON list of channels")
    return len(doc)


def onehot(labels: np.ndarray, classes: int) -> np.ndarray:
    """(C, X, Y, Z) float32 one-hot of codes 1..classes; code 0 rows stay
    all-zero (unlabeled voxels)."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() > classes:
        raise ValueError(
            f"label codes must lie in [0, {classes}], got "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((classes, *labels.shape), dtype=np.float32)
    for c in range(1, classes + 1):
        out[c - 1] = labels == c
    return out


def zscore_stack(stack: np.ndarray) -> np.ndarray:
    """Standardize each channel of a (C, X, Y, Z) stack to zero mean, unit
    variance. Channel scales in the stack differ by orders of magnitude
    (relaxation times next to diffusivities), which this levels before
    training; constant channels become all-zero."""
    stack = np.asarray(stack, dtype=np.float32)
    if stack.ndim != 4:
        raise ValueError("stack must be (C, X, Y, Z)")
    mean = stack.mean(axis=(1, 2, 3), keepdims=True)
    std = stack.std(axis=(1, 2, 3), keepdims=True)
    return (stack - mean) / np.maximum(std, 1e-8)


def split_subjects(subjects, seed: int = 1234,
                   weights: tuple = (19, 2, 3)) -> tuple[list, list, list]:
    """Shuffled train/val/test split with the given integer proportions."""
    if len(weights) != 3 or any(w < 0 for w in weights) or sum(weights) == 0:
        raise ValueError(f"bad split weights {weights}")
    order = list(subjects)
    rng = np.random.default_rng(seed)
    rng.shuffle(order)
    total = sum(weights)
    n = len(order)
    n_train = round(n * weights[0] / total)
    n_val = round(n * weights[1] / total)
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def kfold_indices(n: int, folds: int = 8, seed: int = 1234):
    """Yield (train_idx, held_out_idx) pairs over a shuffled range(n)."""
    if folds < 2 or folds > n:
        raise ValueError(f"folds must lie in [2, {n}], got {folds}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    parts = np.array_split(order, folds)
    for i in range(folds):
        held = parts[i]
        train = np.concatenate([parts[j] for j in range(folds) if j != i])
        yield train.tolist(), held.tolist()

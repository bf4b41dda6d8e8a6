"""Toy-scale two-stage segmentation training on multimodal feature stacks.

Stage one predicts a foreground (ROI) mask with a Dice loss; stage two
predicts nucleus classes with a loss restricted to labeled ground-truth
voxels. Inference multiplies the thresholded mask into the class argmax.
Stacks, labels, and channel manifests come from the producing pipeline's
files; nothing is imported from it.
"""

__version__ = "0.1.0"

from .config import TrainConfig
from .data import (
    kfold_indices,
    load_labels,
    load_stack,
    manifest_channels,
    onehot,
    split_subjects,
    zscore_stack,
)
from .losses import dice_loss, masked_soft_tpr_loss
from .model import UNet3D
from .niftiio import read_volume, write_volume
from .predict import load_checkpoint, predict_combine
from .roi_gt import make_roi_gt
from .train import train_nuclei, train_roi

__all__ = [
    "TrainConfig",
    "UNet3D",
    "dice_loss",
    "kfold_indices",
    "load_checkpoint",
    "load_labels",
    "load_stack",
    "make_roi_gt",
    "manifest_channels",
    "masked_soft_tpr_loss",
    "onehot",
    "predict_combine",
    "read_volume",
    "split_subjects",
    "train_nuclei",
    "train_roi",
    "write_volume",
    "zscore_stack",
    "__version__",
]

"""Training losses for the two stages."""
import torch

EPS = 1e-6


def dice_loss(logits: torch.Tensor, target: torch.Tensor,
              eps: float = EPS) -> torch.Tensor:
    """Soft Dice loss over the whole batch; sigmoid applied to logits."""
    probs = torch.sigmoid(logits)
    target = target.to(probs.dtype)
    intersection = torch.sum(probs * target)
    denom = torch.sum(probs) + torch.sum(target)
    return 1.0 - (2.0 * intersection + eps) / (denom + eps)


def masked_soft_tpr_loss(probs: torch.Tensor, onehot: torch.Tensor,
                         eps: float = EPS) -> torch.Tensor:
    """Per-class soft true-positive rate restricted to labeled voxels.

    probs/onehot are (B, C, ...) with channels first; one-hot rows at
    unlabeled voxels are all zero, which keeps those voxels out of both the
    numerator and the denominator. Classes with no labeled voxels score as
    perfect, matching the reference metric.
    """
    if probs.shape != onehot.shape:
        raise ValueError(f"shape mismatch {tuple(probs.shape)} vs {tuple(onehot.shape)}")
    onehot = onehot.to(probs.dtype)
    reduce_dims = [0] + list(range(2, probs.ndim))
    num = torch.sum(onehot * probs, dim=reduce_dims)
    den = torch.sum(onehot, dim=reduce_dims)
    ratio = (num + eps) / (den + eps)
    return 1.0 - torch.mean(ratio)

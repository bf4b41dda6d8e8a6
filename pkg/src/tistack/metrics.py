"""Segmentation evaluation under sparse ground truth.

Sparse manual labels leave most voxels unlabeled (code 0), so precision
over predictions is meaningless; per-class true positive rate over the
labeled voxels is the primary metric, with a soft masked variant used as
a training loss and ordinary Dice for binary masks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ValidationError
from .labels import LabelScheme
from .volume import Volume, check_same_grid

SOFT_TPR_EPS = 1e-6


@dataclass(frozen=True)
class ClassMetrics:
    code: int
    gt_voxels: int
    tp: int
    tpr: float
    dice: float | None = None


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple[ClassMetrics, ...]
    weighted_average_tpr: float
    scheme: str | None = None
    subject: str | None = None

    def to_doc(self) -> dict:
        return {
            "subject": self.subject,
            "scheme": self.scheme,
            "classes": [
                {
                    "code": c.code,
                    "gt_voxels": c.gt_voxels,
                    "tp": c.tp,
                    "tpr": c.tpr,
                    "dice": c.dice,
                }
                for c in self.classes
            ],
            "weighted_average_tpr": self.weighted_average_tpr,
        }


def _label_data(v) -> np.ndarray:
    return np.asarray(getattr(v, "data", v))


def _check_codes_in_scheme(data: np.ndarray, scheme: LabelScheme, what: str) -> None:
    codes = set(int(c) for c in np.unique(data)) - {0}
    extra = codes - set(scheme.codes())
    if extra:
        raise ValidationError(
            f"{what} contains codes {sorted(extra)} outside scheme {scheme.name!r}"
        )


def tpr_per_class(pred: Volume, gt: Volume, scheme: LabelScheme | None = None,
                  with_dice: bool = False) -> list[ClassMetrics]:
    """Per-class TPR over labeled ground-truth voxels only.

    Voxels with gt == 0 never contribute, so extra predictions outside the
    labeled set are invisible here (the point of the metric).
    """
    check_same_grid(pred, gt, ("pred", "gt"))
    p = _label_data(pred)
    g = _label_data(gt)
    if scheme is not None:
        _check_codes_in_scheme(g, scheme, "ground truth")
        _check_codes_in_scheme(p, scheme, "prediction")
    codes = [int(c) for c in np.unique(g) if c != 0]
    if not codes:
        raise InputError("ground truth has no labeled voxels")
    out = []
    for c in codes:
        gt_c = g == c
        n = int(gt_c.sum())
        tp = int(np.count_nonzero(gt_c & (p == c)))
        d = None
        if with_dice:
            d = dice(pred.with_data((p == c).astype(np.uint8)),
                     gt.with_data(gt_c.astype(np.uint8)))
        out.append(ClassMetrics(code=c, gt_voxels=n, tp=tp, tpr=tp / n, dice=d))
    return out


def masked_soft_tpr_loss(pred_probs, gt_onehot, eps: float = SOFT_TPR_EPS) -> float:
    """1 - (1/C) * sum_c (sum_i T_ci * P_ci + eps) / (sum_i T_ci + eps).

    Both numerator and denominator only see labeled voxels (T is all-zero
    at unlabeled ones), so the loss is constant in predictions there. A
    class with no labeled voxels contributes eps/eps = 1 by construction.
    """
    p = np.asarray(_label_data(pred_probs), dtype=np.float64)
    t = np.asarray(_label_data(gt_onehot), dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.ndim < 2:
        raise ValidationError("expected (..., C) probability and one-hot arrays")
    if np.any(p < -1e-6) or np.any(p > 1 + 1e-6):
        raise InputError("probabilities must lie in [0, 1]")
    n_classes = p.shape[-1]
    axes = tuple(range(p.ndim - 1))
    num = np.sum(t * p, axis=axes) + eps
    den = np.sum(t, axis=axes) + eps
    return float(1.0 - np.mean(num / den)) if n_classes else 0.0


def dice(pred_mask: Volume, gt_mask: Volume) -> float:
    """2|A∩B| / (|A|+|B|); two empty masks agree vacuously (1.0)."""
    check_same_grid(pred_mask, gt_mask, ("pred", "gt"))
    a = _label_data(pred_mask) > 0
    b = _label_data(gt_mask) > 0
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(a & b)) / total


def weighted_average(metrics) -> float:
    """Ground-truth-volume-weighted mean TPR."""
    rows = [m for m in metrics if m.gt_voxels > 0]
    if not rows:
        raise InputError("no classes with labeled ground-truth voxels")
    total = sum(m.gt_voxels for m in rows)
    return sum(m.gt_voxels * m.tpr for m in rows) / total


def evaluate_labels(pred: Volume, gt: Volume, scheme: LabelScheme | None = None,
                    subject: str | None = None, with_dice: bool = False) -> MetricsReport:
    per_class = tpr_per_class(pred, gt, scheme=scheme, with_dice=with_dice)
    return MetricsReport(
        classes=tuple(per_class),
        weighted_average_tpr=weighted_average(per_class),
        scheme=scheme.name if scheme is not None else None,
        subject=subject,
    )


def onehot_encode(labels: Volume, codes) -> np.ndarray:
    """(X,Y,Z,C) float one-hot for the given code order; 0 stays all-zero."""
    data = _label_data(labels)
    return np.stack([(data == c).astype(np.float64) for c in codes], axis=-1)

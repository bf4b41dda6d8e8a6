import numpy as np
import pytest
import torch

from refnet import dice_loss, masked_soft_tpr_loss

EPS = 1e-6


def reference_loss(probs: np.ndarray, oh: np.ndarray, eps: float = EPS) -> float:
    """Independent float64 formula: channels-first arrays."""
    axes = tuple(i for i in range(probs.ndim) if i != 1)
    num = (oh.astype(np.float64) * probs.astype(np.float64)).sum(axis=axes)
    den = oh.astype(np.float64).sum(axis=axes)
    return float(1.0 - np.mean((num + eps) / (den + eps)))


class TestDiceLoss:
    def test_perfect_prediction_near_zero(self):
        target = torch.tensor([[[[[0.0, 1.0], [1.0, 0.0]]]]])
        logits = (target * 2.0 - 1.0) * 40.0  # saturates the sigmoid
        assert float(dice_loss(logits, target)) < 1e-6

    def test_disjoint_prediction_near_one(self):
        target = torch.zeros(1, 1, 2, 2, 2)
        target[..., 0] = 1.0
        logits = torch.full((1, 1, 2, 2, 2), -40.0)
        logits[..., 1] = 40.0
        assert float(dice_loss(logits, target)) > 1 - 1e-6

    def test_gradient_flows(self):
        logits = torch.zeros(1, 1, 2, 2, 2, requires_grad=True)
        target = torch.ones(1, 1, 2, 2, 2)
        dice_loss(logits, target).backward()
        assert logits.grad is not None
        assert torch.all(logits.grad != 0)


class TestMaskedSoftTpr:
    def hand_case(self):
        t = torch.zeros(1, 13, 16)
        t[0, 0, :4] = 1.0
        p = torch.zeros(1, 13, 16)
        p[0, 0, :3] = 1.0
        return p, t

    def test_hand_case_value(self):
        p, t = self.hand_case()
        loss = float(masked_soft_tpr_loss(p, t))
        assert abs(loss - 0.019231) < 1e-6
        exact = 1.0 - (12.0 + (3.0 + EPS) / (4.0 + EPS)) / 13.0
        assert loss == pytest.approx(exact, abs=1e-7)

    def test_matches_float64_reference(self):
        rng = np.random.default_rng(8)
        p = rng.uniform(0, 1, (2, 5, 4, 4, 4))
        t = np.zeros_like(p)
        labels = rng.integers(0, 6, (2, 4, 4, 4))  # 0 = unlabeled
        for c in range(5):
            t[:, c][labels == c + 1] = 1.0
        expected = reference_loss(p, t)
        loss = float(masked_soft_tpr_loss(torch.from_numpy(p), torch.from_numpy(t)))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_unlabeled_predictions_invisible(self):
        p, t = self.hand_case()
        base = float(masked_soft_tpr_loss(p, t))
        rng = np.random.default_rng(9)
        for _ in range(20):
            noisy = p.clone()
            mask = t == 0.0
            noisy[mask] = torch.from_numpy(
                rng.uniform(0, 1, int(mask.sum())).astype(np.float32))
            assert float(masked_soft_tpr_loss(noisy, t)) == pytest.approx(
                base, abs=1e-12)

    def test_empty_classes_score_perfect(self):
        t = torch.zeros(1, 4, 8)
        p = torch.rand(1, 4, 8)
        assert float(masked_soft_tpr_loss(p, t)) == pytest.approx(0.0, abs=1e-12)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shape"):
            masked_soft_tpr_loss(torch.zeros(1, 3, 8), torch.zeros(1, 4, 8))

    def test_gradient_flows_only_through_labeled(self):
        p, t = self.hand_case()
        p = p.clone().requires_grad_(True)
        masked_soft_tpr_loss(p, t).backward()
        assert torch.all(p.grad[t == 0.0] == 0.0)
        assert torch.any(p.grad[t == 1.0] != 0.0)

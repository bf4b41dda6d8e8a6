"""Training engines for the two stages.

Both stages share one loop: Adam with weight decay, plateau-driven learning
rate decay, best-loss early stopping, an epoch cap, and an optional target
loss for overfit runs. Checkpoints carry everything prediction needs to
validate compatibility (channel count, class count, width, manifest).
"""
import json
from dataclasses import asdict

import numpy as np
import torch

from .config import TrainConfig
from .data import onehot
from .losses import dice_loss, masked_soft_tpr_loss
from .model import UNet3D


def _validate_subjects(stacks, targets, cfg: TrainConfig, stage: str):
    if len(stacks) == 0:
        raise ValueError(f"{stage}: no training subjects")
    if len(stacks) != len(targets):
        raise ValueError(f"{stage}: {len(stacks)} stacks vs {len(targets)} targets")
    for i, (s, t) in enumerate(zip(stacks, targets)):
        if s.ndim != 4:
            raise ValueError(f"{stage}: stack {i} must be (C, X, Y, Z)")
        if s.shape[0] != cfg.in_channels:
            raise ValueError(
                f"{stage}: stack {i} has {s.shape[0]} channels, "
                f"config says {cfg.in_channels}"
            )
        if t.shape[-3:] != s.shape[-3:]:
            raise ValueError(f"{stage}: target {i} grid {t.shape[-3:]} "
                             f"does not match stack {s.shape[-3:]}")


def _run(stage: str, stacks, targets, cfg: TrainConfig, out_channels: int,
         loss_fn, batch_size: int, ckpt_path=None, log_path=None,
         manifest=None, head_bias=None) -> dict:
    _validate_subjects(stacks, targets, cfg, stage)
    torch.manual_seed(cfg.seed)
    shuffler = np.random.default_rng(cfg.seed)

    model = UNet3D(cfg.in_channels, out_channels, base=cfg.base, levels=cfg.levels)
    if head_bias is not None:
        with torch.no_grad():
            model.head.bias.fill_(float(head_bias))
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                                 weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.ReduceLROnPlateau(
        optimizer, factor=cfg.plateau_factor, patience=cfg.plateau_patience)

    xs = [torch.from_numpy(np.ascontiguousarray(s, dtype=np.float32)) for s in stacks]
    ys = [torch.from_numpy(np.ascontiguousarray(t, dtype=np.float32)) for t in targets]

    history = []
    best_loss = float("inf")
    best_epoch = 0
    stopped = "max_epochs"
    n = len(xs)
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffler.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            x = torch.stack([xs[i] for i in idx])
            y = torch.stack([ys[i] for i in idx])
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * len(idx)
            seen += len(idx)
        epoch_loss = total / seen
        scheduler.step(epoch_loss)
        history.append({"epoch": epoch, "loss": epoch_loss,
                        "lr": optimizer.param_groups[0]["lr"]})
        if epoch_loss < best_loss:
            best_loss = epoch_loss
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.early_stop_patience:
            stopped = "early_stop"
            break
        if cfg.stop_below is not None and epoch_loss < cfg.stop_below:
            stopped = "target_reached"
            break

    result = {
        "stage": stage,
        "history": history,
        "best_loss": best_loss,
        "best_epoch": best_epoch,
        "epochs_run": len(history),
        "stopped": stopped,
    }
    if ckpt_path is not None:
        torch.save({
            "stage": stage,
            "state_dict": model.state_dict(),
            "in_channels": cfg.in_channels,
            "out_channels": out_channels,
            "base": cfg.base,
            "levels": cfg.levels,
            "seed": cfg.seed,
            "manifest": manifest,
        }, ckpt_path)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            json.dump({**result, "config": asdict(cfg)}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    result["model"] = model
    return result


def train_roi(stacks, roi_gts, cfg: TrainConfig, ckpt_path=None,
              log_path=None, manifest=None) -> dict:
    """Foreground-mask stage: one sigmoid output channel, Dice loss."""
    targets = []
    for gt in roi_gts:
        gt = np.asarray(gt)
        if gt.ndim == 3:
            gt = gt[None]
        if gt.shape[0] != 1:
            raise ValueError("ROI ground truth must be a single binary channel")
        targets.append((gt != 0).astype(np.float32))
    # start the sigmoid output at the foreground base rate; with thin
    # foregrounds the default 0.5 start spends most of a short budget
    # suppressing background
    bias = None
    if targets:
        prevalence = min(max(float(np.mean([t.mean() for t in targets])), 1e-4),
                         1.0 - 1e-4)
        bias = float(np.log(prevalence / (1.0 - prevalence)))
    return _run("roi", stacks, targets, cfg, out_channels=1,
                loss_fn=dice_loss, batch_size=cfg.batch_roi,
                ckpt_path=ckpt_path, log_path=log_path, manifest=manifest,
                head_bias=bias)


def train_nuclei(stacks, label_gts, cfg: TrainConfig, ckpt_path=None,
                 log_path=None, manifest=None) -> dict:
    """Class stage: softmax over cfg.classes, loss restricted to labeled
    voxels (sparse ground truth aware)."""
    targets = [onehot(np.asarray(lab), cfg.classes) for lab in label_gts]

    def loss_fn(logits, y):
        return masked_soft_tpr_loss(torch.softmax(logits, dim=1), y)

    return _run("nuclei", stacks, targets, cfg, out_channels=cfg.classes,
                loss_fn=loss_fn, batch_size=cfg.batch_nuclei,
                ckpt_path=ckpt_path, log_path=log_path, manifest=manifest)

"""Two-stage inference: ROI mask times nuclei argmax."""
import numpy as np
import torch

from .model import UNet3D


def load_checkpoint(path):
    """Load a trained stage; returns (model in eval mode, metadata dict)."""
    doc = torch.load(path, map_location="cpu", weights_only=True)
    for key in ("stage", "state_dict", "in_channels", "out_channels"):
        if key not in doc:
            raise ValueError(f"{path}: not a stage checkpoint (missing {key!r})")
    model = UNet3D(doc["in_channels"], doc["out_channels"],
                   base=doc.get("base", 16), levels=doc.get("levels", 5))
    model.load_state_dict(doc["state_dict"])
    model.eval()
    meta = {k: v for k, v in doc.items() if k != "state_dict"}
    return model, meta


def _check_compatible(roi_meta: dict, nuclei_meta: dict, n_channels: int) -> None:
    if roi_meta.get("stage") != "roi" or nuclei_meta.get("stage") != "nuclei":
        raise ValueError(
            f"checkpoint stages are {roi_meta.get('stage')!r}/"
            f"{nuclei_meta.get('stage')!r}, expected 'roi'/'nuclei'"
        )
    if roi_meta["in_channels"] != nuclei_meta["in_channels"]:
        raise ValueError(
            f"channel mismatch between stages: {roi_meta['in_channels']} "
            f"vs {nuclei_meta['in_channels']}"
        )
    ma, mb = roi_meta.get("manifest"), nuclei_meta.get("manifest")
    if ma is not None and mb is not None and ma != mb:
        raise ValueError("the two checkpoints were trained on different "
                         "channel manifests")
    if n_channels != roi_meta["in_channels"]:
        raise ValueError(f"stack has {n_channels} channels, models expect "
                         f"{roi_meta['in_channels']}")


def predict_combine(roi, nuclei, stack: np.ndarray,
                    threshold: float = 0.5) -> np.ndarray:
    """Combined label map for one (C, X, Y, Z) stack.

    Each stage argument is either a model or a (model, metadata) pair from
    load_checkpoint; with metadata present, compatibility is enforced.
    Voxels outside the thresholded ROI mask are background.
    """
    roi_model, roi_meta = roi if isinstance(roi, tuple) else (roi, None)
    nuc_model, nuc_meta = nuclei if isinstance(nuclei, tuple) else (nuclei, None)
    stack = np.asarray(stack, dtype=np.float32)
    if stack.ndim != 4:
        raise ValueError("stack must be (C, X, Y, Z)")
    if roi_meta is not None and nuc_meta is not None:
        _check_compatible(roi_meta, nuc_meta, stack.shape[0])

    x = torch.from_numpy(np.ascontiguousarray(stack))[None]
    with torch.no_grad():
        roi_model.eval()
        nuc_model.eval()
        mask = torch.sigmoid(roi_model(x))[0, 0] > threshold
        codes = torch.argmax(nuc_model(x)[0], dim=0) + 1
    out = np.where(mask.numpy(), codes.numpy().astype(np.int32), np.int32(0))
    return out

"""Manifest-driven assembly of the multichannel feature stack.

A manifest is an ordered list of channel sources; assembly concatenates
them and verifies the declared channel count. The default composition is
51 multi-TI channels + PD + T1 + four tensor scalars + three eigenvalues
+ three shape measures + the 5-channel orientation map = 68 channels.
That composition is a documented, fully configurable default, not a
fixed truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .volume import Intent, Volume, check_same_grid

# product id -> channels it contributes in the default pipeline
DEFAULT_PRODUCT_ORDER = (
    "multi_ti",   # 51
    "pd",         # 1
    "t1",         # 1
    "ad", "fa", "rd", "trace",  # 4
    "evals",      # 3
    "westin",     # 3
    "k5",         # 5
)
DEFAULT_EXPECTED_CHANNELS = 68


@dataclass(frozen=True)
class ChannelSource:
    """One manifest entry: a named volume and which of its channels to take."""

    name: str
    volume: Volume
    channel: int | None = None  # None = every channel of the source


@dataclass(frozen=True)
class StackManifest:
    sources: tuple[ChannelSource, ...]
    expected_channels: int | None = None

    def __post_init__(self):
        if not self.sources:
            raise ValidationError("stack manifest has no sources")


def _source_channels(src: ChannelSource) -> np.ndarray:
    data = src.volume.data
    if data.ndim == 3:
        data = data[..., None]
    if src.channel is None:
        return data
    if not 0 <= src.channel < data.shape[-1]:
        raise ValidationError(
            f"source {src.name!r} has no channel {src.channel} "
            f"(it has {data.shape[-1]})"
        )
    return data[..., src.channel:src.channel + 1]


def assemble_feature_stack(manifest: StackManifest) -> tuple[Volume, list]:
    """Concatenate manifest channels in order.

    Returns the 4D stack and a per-output-channel provenance list suitable
    for a sidecar JSON.
    """
    first = manifest.sources[0]
    blocks = []
    provenance = []
    for src in manifest.sources:
        check_same_grid(first.volume, src.volume, (first.name, src.name))
        block = _source_channels(src)
        base = sum(b.shape[-1] for b in blocks)
        for j in range(block.shape[-1]):
            provenance.append({
                "index": base + j,
                "source": src.name,
                "channel": j if src.channel is None else src.channel,
            })
        blocks.append(block)
    stacked = np.concatenate(blocks, axis=-1)
    n = stacked.shape[-1]
    if manifest.expected_channels is not None and n != manifest.expected_channels:
        raise ValidationError(
            f"manifest declares {manifest.expected_channels} channels "
            f"but sources provide {n}"
        )
    vol = Volume(stacked, spacing=first.volume.spacing,
                 affine=first.volume.affine, intent=Intent.INTENSITY)
    return vol, provenance


def manifest_from_products(products: dict, order=DEFAULT_PRODUCT_ORDER,
                           expected: int | None = DEFAULT_EXPECTED_CHANNELS) -> StackManifest:
    """Build the default manifest from named pipeline products."""
    missing = [name for name in order if name not in products]
    if missing:
        raise ValidationError(f"stack manifest references missing products: {missing}")
    sources = tuple(ChannelSource(name, products[name]) for name in order)
    return StackManifest(sources=sources, expected_channels=expected)


def manifest_from_doc(doc: dict, resolve) -> StackManifest:
    """Manifest from a JSON document; `resolve(ref)` loads a Volume.

    Document shape:
      {"expected_channels": 68,
       "sources": [{"ref": "multi_ti.nii.gz"},
                   {"ref": "tensor.nii.gz", "channel": 0}, ...]}
    """
    try:
        sources = tuple(
            ChannelSource(
                name=str(entry["ref"]),
                volume=resolve(entry["ref"]),
                channel=int(entry["channel"]) if "channel" in entry else None,
            )
            for entry in doc["sources"]
        )
        expected = doc.get("expected_channels")
        return StackManifest(
            sources=sources,
            expected_channels=int(expected) if expected is not None else None,
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed stack manifest: {exc}") from exc

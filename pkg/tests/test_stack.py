import numpy as np
import pytest

from tistack import (ValidationError, Volume, assemble_feature_stack,
                     manifest_from_doc, manifest_from_products)
from tistack.stack import (DEFAULT_EXPECTED_CHANNELS, DEFAULT_PRODUCT_ORDER,
                           ChannelSource, StackManifest)


def vol(value, channels=None, dims=(3, 3, 3)):
    shape = dims if channels is None else dims + (channels,)
    return Volume(np.full(shape, float(value)))


class TestAssemble:
    def test_two_scalars_in_order(self):
        manifest = StackManifest(sources=(
            ChannelSource("a", vol(1.0)),
            ChannelSource("b", vol(2.0)),
        ))
        stack, prov = assemble_feature_stack(manifest)
        assert stack.dims == (3, 3, 3, 2)
        assert np.all(stack.data[..., 0] == 1.0)
        assert np.all(stack.data[..., 1] == 2.0)
        assert [p["source"] for p in prov] == ["a", "b"]
        assert [p["index"] for p in prov] == [0, 1]

    def test_multichannel_source_expanded(self):
        multi = Volume(np.arange(2 * 2 * 2 * 4, dtype=np.float64).reshape(2, 2, 2, 4))
        manifest = StackManifest(sources=(
            ChannelSource("m", multi),
            ChannelSource("s", vol(9.0, dims=(2, 2, 2))),
        ))
        stack, prov = assemble_feature_stack(manifest)
        assert stack.dims == (2, 2, 2, 5)
        assert np.array_equal(stack.data[..., :4], multi.data)
        assert prov[2] == {"index": 2, "source": "m", "channel": 2}
        assert prov[4] == {"index": 4, "source": "s", "channel": 0}

    def test_single_channel_selection(self):
        multi = Volume(np.arange(8 * 3, dtype=np.float64).reshape(2, 2, 2, 3))
        manifest = StackManifest(sources=(
            ChannelSource("m", multi, channel=1),
        ))
        stack, prov = assemble_feature_stack(manifest)
        assert stack.dims == (2, 2, 2, 1)
        assert np.array_equal(stack.data[..., 0], multi.data[..., 1])
        assert prov[0]["channel"] == 1

    def test_channel_out_of_range_rejected(self):
        manifest = StackManifest(sources=(
            ChannelSource("m", vol(1.0, channels=3), channel=3),
        ))
        with pytest.raises(ValidationError, match="m"):
            assemble_feature_stack(manifest)

    def test_grid_mismatch_names_sources(self):
        manifest = StackManifest(sources=(
            ChannelSource("alpha", vol(1.0)),
            ChannelSource("beta", vol(1.0, dims=(4, 3, 3))),
        ))
        with pytest.raises(ValidationError, match="beta"):
            assemble_feature_stack(manifest)

    def test_count_mismatch_rejected(self):
        manifest = StackManifest(sources=(
            ChannelSource("a", vol(1.0)),
        ), expected_channels=2)
        with pytest.raises(ValidationError, match="2"):
            assemble_feature_stack(manifest)

    def test_empty_manifest_rejected(self):
        with pytest.raises(ValidationError):
            StackManifest(sources=())

    def test_provenance_covers_every_channel(self):
        manifest = StackManifest(sources=(
            ChannelSource("m", vol(1.0, channels=4)),
            ChannelSource("s", vol(2.0)),
        ))
        stack, prov = assemble_feature_stack(manifest)
        assert len(prov) == stack.n_channels
        assert [p["index"] for p in prov] == list(range(stack.n_channels))

    def test_world_grid_carried_from_first_source(self):
        affine = np.diag([2.0, 2.0, 2.0, 1.0])
        a = Volume(np.zeros((3, 3, 3)), spacing=(2.0, 2.0, 2.0), affine=affine)
        b = Volume(np.ones((3, 3, 3)), spacing=(2.0, 2.0, 2.0), affine=affine)
        stack, _ = assemble_feature_stack(StackManifest(sources=(
            ChannelSource("a", a), ChannelSource("b", b))))
        assert stack.spacing == (2.0, 2.0, 2.0)
        assert np.array_equal(stack.affine, affine)


class TestDefaultManifest:
    def products(self, dims=(2, 2, 2)):
        return {
            "multi_ti": vol(0.0, channels=51, dims=dims),
            "pd": vol(1.0, dims=dims),
            "t1": vol(2.0, dims=dims),
            "ad": vol(3.0, dims=dims),
            "fa": vol(4.0, dims=dims),
            "rd": vol(5.0, dims=dims),
            "trace": vol(6.0, dims=dims),
            "evals": vol(7.0, channels=3, dims=dims),
            "westin": vol(8.0, channels=3, dims=dims),
            "k5": vol(9.0, channels=5, dims=dims),
        }

    def test_default_composition_is_68_channels(self):
        manifest = manifest_from_products(self.products())
        stack, prov = assemble_feature_stack(manifest)
        assert stack.n_channels == DEFAULT_EXPECTED_CHANNELS == 68
        assert len(prov) == 68
        # order: multi_ti block first, k5 block last
        assert prov[0]["source"] == "multi_ti"
        assert prov[50]["source"] == "multi_ti"
        assert prov[51]["source"] == "pd"
        assert prov[67]["source"] == "k5"

    def test_missing_product_named(self):
        p = self.products()
        del p["fa"]
        with pytest.raises(ValidationError, match="fa"):
            manifest_from_products(p)

    def test_custom_order(self):
        p = self.products()
        manifest = manifest_from_products(p, order=("pd", "t1"), expected=2)
        stack, _ = assemble_feature_stack(manifest)
        assert stack.n_channels == 2

    def test_default_order_constant(self):
        assert DEFAULT_PRODUCT_ORDER[0] == "multi_ti"
        assert DEFAULT_PRODUCT_ORDER[-1] == "k5"


class TestManifestFromDoc:
    def test_resolves_refs_and_channels(self):
        store = {
            "multi.nii.gz": vol(1.0, channels=3),
            "scalar.nii.gz": vol(2.0),
        }
        doc = {
            "expected_channels": 2,
            "sources": [
                {"ref": "multi.nii.gz", "channel": 2},
                {"ref": "scalar.nii.gz"},
            ],
        }
        manifest = manifest_from_doc(doc, resolve=store.__getitem__)
        stack, prov = assemble_feature_stack(manifest)
        assert stack.n_channels == 2
        assert prov[0] == {"index": 0, "source": "multi.nii.gz", "channel": 2}

    def test_malformed_doc_rejected(self):
        with pytest.raises(ValidationError):
            manifest_from_doc({"sources": [{"no_ref": 1}]}, resolve=lambda r: None)

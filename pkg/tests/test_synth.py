import numpy as np
import pytest

from albalance.raster import UNLABELED
from albalance.synth import (
    ClassStyle,
    DatasetSpec,
    default_spec,
    edge_benchmark_spec,
    load_dataset,
    save_dataset,
    synth_dataset,
)


class TestSynthDataset:
    def test_deterministic_bytes(self):
        spec = default_spec(num_images=3)
        a = synth_dataset(42, spec)
        b = synth_dataset(42, spec)
        for image_id in a.image_ids:
            assert a.images[image_id].data.tobytes() == b.images[image_id].data.tobytes()
            assert a.truth[image_id].labels.tobytes() == b.truth[image_id].labels.tobytes()

    def test_different_seeds_differ(self):
        spec = default_spec(num_images=1)
        a = synth_dataset(1, spec)
        b = synth_dataset(2, spec)
        assert a.images[a.image_ids[0]].data.tobytes() != b.images[b.image_ids[0]].data.tobytes()

    def test_aggregate_proportions_within_tolerance(self):
        spec = default_spec()
        ds = synth_dataset(7, spec)
        np.testing.assert_allclose(ds.proportions, spec.proportions, atol=0.03)

    def test_truth_fully_decided(self):
        ds = synth_dataset(3, default_spec(num_images=2))
        for image_id in ds.image_ids:
            assert not np.any(ds.truth[image_id].labels == UNLABELED)
            assert ds.truth[image_id].labels.max() < ds.spec.num_classes

    def test_infeasible_proportions_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            DatasetSpec(
                classes=(ClassStyle("a", (0, 0, 0)), ClassStyle("b", (1, 1, 1))),
                proportions=(0.7, 0.4),
            )

    def test_blob_shape_family(self):
        spec = DatasetSpec(
            classes=(
                ClassStyle("bg", (40, 40, 40), noise=2.0),
                ClassStyle("blob", (220, 220, 220), noise=2.0, shape="blob"),
            ),
            proportions=(0.8, 0.2),
            num_images=4,
            height=64,
            width=64,
        )
        ds = synth_dataset(5, spec)
        assert abs(ds.proportions[1] - 0.2) < 0.1
        # blobs are compact: the blob class should appear as one ellipse per image
        from scipy import ndimage

        for image_id in ds.image_ids:
            blob = ds.truth[image_id].labels == 1
            if blob.any():
                _, n = ndimage.label(blob)
                assert n <= 2

    def test_spec_json_roundtrip(self):
        spec = default_spec()
        assert DatasetSpec.from_json(spec.to_json()) == spec


class TestDatasetIO:
    def test_save_load_roundtrip(self, tmp_path):
        ds = synth_dataset(11, default_spec(num_images=2, height=48, width=48))
        save_dataset(ds, tmp_path)
        back = load_dataset(tmp_path)
        assert back.image_ids == ds.image_ids
        for image_id in ds.image_ids:
            assert np.array_equal(back.images[image_id].data, ds.images[image_id].data)
            assert np.array_equal(back.truth[image_id].labels, ds.truth[image_id].labels)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_dataset(tmp_path / "nope")


class TestEdgeBenchmark:
    def test_high_contrast_classes(self):
        spec = edge_benchmark_spec(num_images=1)
        lumas = sorted(0.299 * c.color[0] + 0.587 * c.color[1] + 0.114 * c.color[2] for c in spec.classes)
        assert min(b - a for a, b in zip(lumas, lumas[1:])) > 60

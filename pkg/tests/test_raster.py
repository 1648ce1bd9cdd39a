import math

import numpy as np
import pytest

from albalance.raster import (
    UNLABELED,
    LabelMask,
    MetricReport,
    ProbabilityMap,
    RasterError,
    RasterImage,
    argmax_map,
    class_proportions,
    confusion_matrix,
    entropy_sum,
    evaluate,
)


def random_pm(rng, h, w, c):
    raw = rng.uniform(0.05, 1.0, size=(h, w, c))
    return ProbabilityMap(data=raw / raw.sum(axis=2, keepdims=True))


def entropy_oracle(pm, mask):
    """Scalar re-implementation: plain python loops over Eq. terms."""
    total = 0.0
    flat = pm.data.reshape(-1, pm.num_classes)
    for idx in mask:
        for c in range(pm.num_classes):
            p = flat[idx, c]
            if p > 0:
                total -= p * math.log(p)
    return total


class TestEntropySum:
    def test_uniform_four_pixels(self):
        pm = ProbabilityMap(data=np.full((2, 2, 2), 0.5))
        assert entropy_sum(pm, np.arange(4)) == pytest.approx(4 * math.log(2), abs=1e-12)

    def test_one_hot_is_zero(self):
        data = np.zeros((3, 3, 4))
        data[:, :, 2] = 1.0
        assert entropy_sum(ProbabilityMap(data=data), np.arange(9)) == 0.0

    def test_single_pixel_07_03(self):
        pm = ProbabilityMap(data=np.array([[[0.7, 0.3]]]))
        assert entropy_sum(pm, np.array([0])) == pytest.approx(0.6108643020548935, abs=1e-9)

    def test_empty_mask(self):
        pm = ProbabilityMap(data=np.full((2, 2, 2), 0.5))
        assert entropy_sum(pm, np.array([], dtype=np.int64)) == 0.0

    def test_out_of_bounds(self):
        pm = ProbabilityMap(data=np.full((2, 2, 2), 0.5))
        with pytest.raises(RasterError):
            entropy_sum(pm, np.array([4]))

    def test_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            pm = random_pm(rng, 4, 5, 3)
            mask = rng.choice(20, size=rng.integers(1, 20), replace=False)
            assert entropy_sum(pm, mask) == pytest.approx(entropy_oracle(pm, mask), abs=1e-9)

    def test_additive_over_disjoint_masks(self):
        rng = np.random.default_rng(1)
        pm = random_pm(rng, 4, 4, 3)
        idx = rng.permutation(16)
        a, b = idx[:7], idx[7:]
        total = entropy_sum(pm, idx)
        assert entropy_sum(pm, a) + entropy_sum(pm, b) == pytest.approx(total, abs=1e-9)


class TestArgmaxMap:
    def test_one_hot(self):
        data = np.zeros((2, 2, 3))
        data[:, :, 1] = 1.0
        assert np.all(argmax_map(ProbabilityMap(data=data)).labels == 1)

    def test_tie_breaks_to_smallest(self):
        pm = ProbabilityMap(data=np.full((1, 1, 2), 0.5))
        assert argmax_map(pm).labels[0, 0] == 0

    def test_matches_elementwise_scan(self):
        rng = np.random.default_rng(2)
        pm = random_pm(rng, 3, 3, 4)
        out = argmax_map(pm)
        for i in range(3):
            for j in range(3):
                best, best_p = 0, -1.0
                for c in range(4):
                    if pm.data[i, j, c] > best_p:
                        best, best_p = c, pm.data[i, j, c]
                assert out.labels[i, j] == best

    def test_invariant_under_positive_rescaling(self):
        rng = np.random.default_rng(3)
        pm = random_pm(rng, 4, 4, 3)
        scale = rng.uniform(0.2, 0.9, size=(4, 4, 1))
        scaled = pm.data * scale
        scaled = scaled / scaled.sum(axis=2, keepdims=True)
        assert np.array_equal(argmax_map(pm).labels, argmax_map(ProbabilityMap(data=scaled)).labels)


class TestClassProportions:
    def test_basic_counts(self):
        lm = LabelMask.from_labels(np.array([[0, 0], [1, 2]], dtype=np.uint8))
        np.testing.assert_allclose(class_proportions(lm, np.arange(4), 3), [0.5, 0.25, 0.25])

    def test_single_class(self):
        lm = LabelMask.from_labels(np.full((2, 2), 1, dtype=np.uint8))
        np.testing.assert_allclose(class_proportions(lm, np.arange(4), 3), [0, 1, 0])

    def test_all_unlabeled_raises(self):
        lm = LabelMask.empty(2, 2)
        with pytest.raises(RasterError, match="no decided pixels"):
            class_proportions(lm, np.arange(4), 3)

    def test_unlabeled_excluded_both_sides(self):
        labels = np.array([[0, UNLABELED], [1, UNLABELED]], dtype=np.uint8)
        lm = LabelMask.from_labels(labels)
        np.testing.assert_allclose(class_proportions(lm, np.arange(4), 2), [0.5, 0.5])

    def test_matches_counting_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            labels = rng.integers(0, 4, size=(4, 4)).astype(np.uint8)
            lm = LabelMask.from_labels(labels)
            mask = rng.choice(16, size=rng.integers(1, 16), replace=False)
            counts = [0] * 4
            for idx in mask:
                counts[labels.ravel()[idx]] += 1
            expected = np.array(counts) / mask.size
            np.testing.assert_allclose(class_proportions(lm, mask, 4), expected, atol=1e-12)


class TestEvaluate:
    def test_perfect(self):
        labels = np.array([[0, 1], [2, 0]], dtype=np.uint8)
        rep = evaluate(LabelMask.from_labels(labels), LabelMask.from_labels(labels), 3)
        assert rep.miou == 1.0
        np.testing.assert_allclose(rep.per_class_iou, 1.0)

    def test_hand_confusion(self):
        truth = LabelMask.from_labels(np.array([[0, 1], [0, 1]], dtype=np.uint8))
        pred = LabelMask.from_labels(np.array([[0, 0], [1, 1]], dtype=np.uint8))
        rep = evaluate(pred, truth, 2)
        np.testing.assert_allclose(rep.per_class_iou, [1 / 3, 1 / 3])
        assert rep.miou == pytest.approx(1 / 3, abs=1e-12)

    def test_disjoint_classes(self):
        truth = LabelMask.from_labels(np.zeros((2, 2), dtype=np.uint8))
        pred = LabelMask.from_labels(np.ones((2, 2), dtype=np.uint8))
        assert evaluate(pred, truth, 2).miou == 0.0

    def test_dimension_mismatch(self):
        a = LabelMask.from_labels(np.zeros((2, 2), dtype=np.uint8))
        b = LabelMask.from_labels(np.zeros((3, 2), dtype=np.uint8))
        with pytest.raises(RasterError):
            evaluate(a, b)

    def test_truth_unlabeled_excluded(self):
        truth = LabelMask.from_labels(np.array([[0, UNLABELED], [1, UNLABELED]], dtype=np.uint8))
        pred = LabelMask.from_labels(np.array([[0, 1], [1, 0]], dtype=np.uint8))
        rep = evaluate(pred, truth, 2)
        assert rep.confusion.sum() == 2
        assert rep.miou == 1.0

    def test_absent_class_excluded_from_means(self):
        truth = LabelMask.from_labels(np.array([[0, 0], [1, 1]], dtype=np.uint8))
        pred = LabelMask.from_labels(np.array([[0, 0], [1, 1]], dtype=np.uint8))
        rep = evaluate(pred, truth, 5)
        assert rep.miou == 1.0
        assert list(rep.present) == [True, True, False, False, False]

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(5)
        truth = rng.integers(0, 4, size=(6, 6)).astype(np.uint8)
        pred = rng.integers(0, 4, size=(6, 6)).astype(np.uint8)
        perm = np.array([2, 3, 1, 0], dtype=np.uint8)
        rep = evaluate(LabelMask.from_labels(pred), LabelMask.from_labels(truth), 4)
        rep_p = evaluate(LabelMask.from_labels(perm[pred]), LabelMask.from_labels(perm[truth]), 4)
        assert rep.miou == pytest.approx(rep_p.miou, abs=1e-15)
        np.testing.assert_allclose(np.sort(rep.per_class_iou), np.sort(rep_p.per_class_iou))

    def test_row_sums_match_truth_counts(self):
        rng = np.random.default_rng(6)
        truth = rng.integers(0, 3, size=(5, 5)).astype(np.uint8)
        pred = rng.integers(0, 3, size=(5, 5)).astype(np.uint8)
        conf = confusion_matrix(LabelMask.from_labels(pred), LabelMask.from_labels(truth), 3)
        np.testing.assert_array_equal(conf.sum(axis=1), np.bincount(truth.ravel(), minlength=3))


class TestTypes:
    def test_probability_rows_must_sum(self):
        with pytest.raises(RasterError):
            ProbabilityMap(data=np.full((1, 1, 2), 0.4))

    def test_label_codes_bounded(self):
        with pytest.raises(RasterError):
            LabelMask.from_labels(np.array([[254]], dtype=np.uint8) + 0)

    def test_image_shape(self):
        with pytest.raises(RasterError):
            RasterImage(data=np.zeros((2, 2, 4), dtype=np.uint8))

    def test_metric_report_requires_truth(self):
        with pytest.raises(RasterError):
            MetricReport.from_confusion(np.zeros((3, 3), dtype=np.int64))

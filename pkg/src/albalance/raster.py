"""Core raster tensors and the evaluation/information formulas.

Everything here is pure and operates on immutable-by-convention numpy
arrays: a probability tensor (H, W, C), a label mask with per-pixel
provenance, and the confusion/IoU/F1 machinery built on top of them.
Pixel sets are flat row-major indices into the H*W grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNLABELED = 255
MAX_CLASSES = 254

PROV_NONE = 0
PROV_HUMAN = 1
PROV_PSEUDO = 2


class RasterError(ValueError):
    """Invalid raster construction or operation."""


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class probability tensor, shape (H, W, C), float64."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3 or min(d.shape) < 1:
            raise RasterError(f"probability map must be (H, W, C) with positive dims, got {d.shape}")
        if d.dtype != np.float64:
            raise RasterError("probability map must be float64")
        if d.min() < 0.0 or d.max() > 1.0:
            raise RasterError("probabilities must lie in [0, 1]")
        sums = d.sum(axis=2)
        if np.abs(sums - 1.0).max() > 1e-9:
            raise RasterError("per-pixel probabilities must sum to 1 within 1e-9")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def num_classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMask:
    """Per-pixel class codes (uint8, 255 = unlabeled) plus provenance flags."""

    labels: np.ndarray
    provenance: np.ndarray

    def __post_init__(self):
        lab, prov = self.labels, self.provenance
        if lab.ndim != 2 or lab.shape != prov.shape:
            raise RasterError("labels and provenance must be 2-d arrays of equal shape")
        if lab.dtype != np.uint8 or prov.dtype != np.uint8:
            raise RasterError("labels and provenance must be uint8")
        decided = lab != UNLABELED
        if np.any(lab[decided] >= MAX_CLASSES):
            raise RasterError(f"class codes must be < {MAX_CLASSES} or the {UNLABELED} sentinel")
        # decided pixels with provenance NONE are legal: prediction masks
        # (argmax output) carry no annotation provenance
        if np.any(prov[~decided] != PROV_NONE):
            raise RasterError("unlabeled pixels must have provenance NONE")

    @classmethod
    def empty(cls, height: int, width: int) -> "LabelMask":
        return cls(
            labels=np.full((height, width), UNLABELED, dtype=np.uint8),
            provenance=np.zeros((height, width), dtype=np.uint8),
        )

    @classmethod
    def from_labels(cls, labels: np.ndarray, provenance_code: int = PROV_HUMAN) -> "LabelMask":
        """Wrap a plain label array; decided pixels get a uniform provenance."""
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        prov = np.where(labels != UNLABELED, np.uint8(provenance_code), np.uint8(PROV_NONE))
        return cls(labels=labels, provenance=prov.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def decided(self) -> np.ndarray:
        return self.labels != UNLABELED


@dataclass(frozen=True)
class RasterImage:
    """8-bit image, (H, W) grayscale or (H, W, 3) RGB."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8:
            raise RasterError("image samples must be uint8")
        if d.ndim == 2:
            ok = min(d.shape) >= 1
        elif d.ndim == 3:
            ok = min(d.shape[:2]) >= 1 and d.shape[2] == 3
        else:
            ok = False
        if not ok:
            raise RasterError(f"image must be (H, W) or (H, W, 3), got {d.shape}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def luma(self) -> np.ndarray:
        """Rec.601 luma as float64 (identity for grayscale)."""
        d = self.data.astype(np.float64)
        if self.channels == 1:
            return d
        return 0.299 * d[:, :, 0] + 0.587 * d[:, :, 1] + 0.114 * d[:, :, 2]


@dataclass(frozen=True)
class MetricReport:
    """Per-class IoU/F1 with their means and the raw confusion matrix.

    Means run over classes present in the ground truth only; absent
    classes keep 0.0 placeholders and are flagged in `present`.
    """

    confusion: np.ndarray
    per_class_iou: np.ndarray
    miou: float
    per_class_f1: np.ndarray
    mean_f1: float
    present: np.ndarray
    beta: float = field(default=1.0)

    @classmethod
    def from_confusion(cls, confusion: np.ndarray, beta: float = 1.0) -> "MetricReport":
        confusion = np.asarray(confusion, dtype=np.int64)
        if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
            raise RasterError("confusion matrix must be square")
        tp = np.diag(confusion).astype(np.float64)
        fn = confusion.sum(axis=1) - tp  # row = truth
        fp = confusion.sum(axis=0) - tp  # col = prediction
        present = confusion.sum(axis=1) > 0

        denom = tp + fp + fn
        iou = np.where(denom > 0, tp / np.where(denom > 0, denom, 1), 0.0)
        prec = np.where(tp + fp > 0, tp / np.where(tp + fp > 0, tp + fp, 1), 0.0)
        rec = np.where(tp + fn > 0, tp / np.where(tp + fn > 0, tp + fn, 1), 0.0)
        fdenom = beta * beta * prec + rec
        f1 = np.where(fdenom > 0, (1 + beta * beta) * prec * rec / np.where(fdenom > 0, fdenom, 1), 0.0)

        iou = np.where(present, iou, 0.0)
        f1 = np.where(present, f1, 0.0)
        if not present.any():
            raise RasterError("ground truth has no decided pixels")
        return cls(
            confusion=confusion,
            per_class_iou=iou,
            miou=float(iou[present].mean()),
            per_class_f1=f1,
            mean_f1=float(f1[present].mean()),
            present=present,
            beta=beta,
        )

    def min_present_iou(self) -> float:
        return float(self.per_class_iou[self.present].min())


def _check_mask_indices(mask: np.ndarray, npx: int) -> np.ndarray:
    mask = np.asarray(mask, dtype=np.int64).ravel()
    if mask.size and (mask.min() < 0 or mask.max() >= npx):
        raise RasterError("mask index out of bounds")
    return mask


def entropy_sum(pm: ProbabilityMap, mask: np.ndarray) -> float:
    """Summed Shannon entropy (nats) over the masked pixels.

    Zero-probability terms contribute 0; an empty mask yields 0.0.
    """
    mask = _check_mask_indices(mask, pm.height * pm.width)
    if mask.size == 0:
        return 0.0
    p = pm.data.reshape(-1, pm.num_classes)[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-terms.sum())


def argmax_map(pm: ProbabilityMap) -> LabelMask:
    """Per-pixel argmax labels; ties break to the smallest class index."""
    codes = pm.data.argmax(axis=2).astype(np.uint8)
    return LabelMask(labels=codes, provenance=np.zeros_like(codes))


def class_proportions(lm: LabelMask, mask: np.ndarray, num_classes: int) -> np.ndarray:
    """Fraction of decided masked pixels in each class (sums to 1)."""
    mask = _check_mask_indices(mask, lm.height * lm.width)
    if mask.size == 0:
        raise RasterError("mask is empty")
    codes = lm.labels.ravel()[mask]
    codes = codes[codes != UNLABELED]
    if codes.size == 0:
        raise RasterError("no decided pixels in mask")
    counts = np.bincount(codes, minlength=num_classes)[:num_classes]
    return counts.astype(np.float64) / codes.size


def confusion_matrix(pred: LabelMask, truth: LabelMask, num_classes: int | None = None) -> np.ndarray:
    """C x C counts, rows = truth class, cols = predicted class.

    Pixels unlabeled in the truth are excluded entirely.
    """
    if pred.labels.shape != truth.labels.shape:
        raise RasterError("prediction and truth dimensions differ")
    keep = truth.labels != UNLABELED
    t = truth.labels[keep].astype(np.int64)
    p = pred.labels[keep].astype(np.int64)
    if np.any(p == UNLABELED):
        raise RasterError("prediction has unlabeled pixels inside evaluated region")
    if num_classes is None:
        num_classes = int(max(t.max(initial=0), p.max(initial=0))) + 1
    counts = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return counts.reshape(num_classes, num_classes)


def evaluate(pred: LabelMask, truth: LabelMask, num_classes: int | None = None) -> MetricReport:
    """Confusion-matrix IoU/F1 report of a prediction against ground truth."""
    return MetricReport.from_confusion(confusion_matrix(pred, truth, num_classes))

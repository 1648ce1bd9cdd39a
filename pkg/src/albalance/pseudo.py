"""Class-balanced pseudo-labels via adaptive per-class ratio thresholds.

Each class admits the top K_c fraction of its own predicted unlabeled
pixels, with K_c = min(1, base * exp(mean_iou - iou_c)): the worse a
class performs, the larger its share of pseudo-labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import PROV_PSEUDO, UNLABELED, LabelMask, ProbabilityMap, RasterError


@dataclass(frozen=True)
class PseudoConfig:
    base: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.base <= 1.0:
            raise ValueError("base ratio must lie in (0, 1]")


def ratio_thresholds(raw_iou: np.ndarray, cfg: PseudoConfig = PseudoConfig()) -> np.ndarray:
    """Per-class selection ratios, clamped to 1 from above."""
    raw = np.asarray(raw_iou, dtype=np.float64)
    if raw.size == 0 or raw.min() < 0 or raw.max() > 1:
        raise ValueError("raw IoU entries must lie in [0, 1]")
    return np.minimum(1.0, cfg.base * np.exp(raw.mean() - raw))


def global_threshold_select(pm: ProbabilityMap, labeled: LabelMask, total_count: int) -> LabelMask:
    """Class-agnostic ablation baseline: top pixels by max probability overall."""
    return _select(pm, labeled, lambda n_per_class, _: total_count, per_class=False)


def generate_pseudo(pm: ProbabilityMap, labeled: LabelMask, thresholds: np.ndarray) -> LabelMask:
    """Mark the top floor(K_c * n_c) predicted-c unlabeled pixels as PSEUDO class c.

    Ranking is by the pixel's maximum class probability, ties broken by
    row-major pixel order; already-decided pixels are never touched.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.min() < 0 or thresholds.max() > 1:
        raise ValueError("ratio thresholds must lie in [0, 1]")
    if thresholds.size < pm.num_classes:
        raise ValueError("one threshold per class required")
    return _select(pm, labeled, lambda n_c, c: int(np.floor(thresholds[c] * n_c)), per_class=True)


def _select(pm: ProbabilityMap, labeled: LabelMask, quota, per_class: bool) -> LabelMask:
    if (pm.height, pm.width) != (labeled.height, labeled.width):
        raise RasterError("probability map and label mask dimensions differ")
    flat_p = pm.data.reshape(-1, pm.num_classes)
    pred = flat_p.argmax(axis=1)
    maxprob = flat_p.max(axis=1)
    free = labeled.labels.ravel() == UNLABELED

    out_labels = labeled.labels.copy().ravel()
    out_prov = labeled.provenance.copy().ravel()

    if per_class:
        for c in range(pm.num_classes):
            cand = np.nonzero(free & (pred == c))[0]
            if cand.size == 0:
                continue
            k = quota(cand.size, c)
            if k <= 0:
                continue
            order = np.lexsort((cand, -maxprob[cand]))
            take = cand[order[:k]]
            out_labels[take] = c
            out_prov[take] = PROV_PSEUDO
    else:
        cand = np.nonzero(free)[0]
        k = min(int(quota(cand.size, None)), cand.size)
        if cand.size and k > 0:
            order = np.lexsort((cand, -maxprob[cand]))
            take = cand[order[:k]]
            out_labels[take] = pred[take].astype(np.uint8)
            out_prov[take] = PROV_PSEUDO

    shape = (labeled.height, labeled.width)
    return LabelMask(labels=out_labels.reshape(shape), provenance=out_prov.reshape(shape))

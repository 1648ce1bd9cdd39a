"""Acquisition: balanced initial selection and performance-balanced scoring.

A unit's score is its regional information (summed entropy, normalized
to the nominal region area) times a sigmoid of the class-balance term
sum_c N_c / p_c, where N_c are predicted-class proportions inside the
unit and p_c the normalized per-class performance on labeled data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .raster import ProbabilityMap, RasterError, RasterImage, argmax_map, class_proportions, entropy_sum
from .units import LabelingUnit

STRATEGY_BALANCED = "BALANCED"
STRATEGY_ENTROPY = "ENTROPY"
STRATEGY_RANDOM = "RANDOM"

PERF_EPS = 1e-3
_PROTO_TEMPERATURE = 0.1

# relative weights of the feature blocks; unit weights keep the color
# means dominant, which proved the most reliable unit-level signal
# (boundary-spanning units corrupt the texture statistics)
_STD_SCALE = 1.0
_HIST_SCALE = 1.0


@dataclass(frozen=True)
class ClassStats:
    """Per-class performance: raw IoU, the sum-to-1 normalized vector, and its mean."""

    raw_iou: np.ndarray
    normalized_perf: np.ndarray
    mean_perf: float

    @property
    def num_classes(self) -> int:
        return self.raw_iou.size


def normalize_perf(raw_iou: np.ndarray, eps: float = PERF_EPS) -> ClassStats:
    """Floor raw IoUs at eps and rescale to sum to 1; mean stays unclamped."""
    raw = np.asarray(raw_iou, dtype=np.float64)
    if raw.size == 0 or raw.min() < 0 or raw.max() > 1:
        raise ValueError("raw IoU entries must lie in [0, 1]")
    clamped = np.maximum(raw, eps)
    return ClassStats(raw_iou=raw, normalized_perf=clamped / clamped.sum(), mean_perf=float(raw.mean()))


def uniform_stats(num_classes: int) -> ClassStats:
    """Neutral stats: balance term becomes constant across units."""
    return normalize_perf(np.full(num_classes, 0.5))


@dataclass(frozen=True)
class UnitScore:
    unit_id: str
    info: float
    balance: float
    score: float


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x)) if x >= 0 else float(np.exp(x) / (1.0 + np.exp(x)))


def balanced_score(pm: ProbabilityMap, unit: LabelingUnit, stats: ClassStats, region_size: int = 80) -> UnitScore:
    """Comprehensive score of one unit: info x sigmoid(balance).

    Info is the mean per-pixel entropy scaled by the nominal region area
    so that variable-size edge units compete fairly with full cells.
    """
    if unit.mask.size == 0:
        raise RasterError("unit mask is empty")
    info = entropy_sum(pm, unit.mask) / unit.mask.size * float(region_size * region_size)
    pred = argmax_map(pm)
    n_c = class_proportions(pred, unit.mask, stats.num_classes)
    balance = float((n_c / stats.normalized_perf).sum())
    return UnitScore(unit_id=unit.id, info=info, balance=balance, score=info * _sigmoid(balance))


class EmbeddingProvider(Protocol):
    """Classifies a labeling unit into (class id, confidence in [0, 1])."""

    def classify_unit(self, unit: LabelingUnit) -> tuple[int, float]: ...


def region_feature(region: RasterImage, mask: np.ndarray | None = None) -> np.ndarray:
    """Per-channel mean/std plus an 8-bin gradient-orientation histogram, l2-normalized.

    With a mask (flat indices into the region), statistics cover only the
    masked pixels; the histogram is averaged per pixel so features are
    comparable across region sizes. Each block (means, stds, histogram)
    is normalized before the final l2 so that color does not drown out
    the much smaller texture statistics.
    """
    data = region.data.astype(np.float64) / 255.0
    if data.ndim == 2:
        data = data[:, :, None]
    flat = data.reshape(-1, data.shape[2])
    if mask is not None:
        flat = flat[mask]
    means = flat.mean(axis=0)
    stds = flat.std(axis=0)

    luma = region.luma() / 255.0
    gx = np.zeros_like(luma)
    gy = np.zeros_like(luma)
    gx[:, 1:-1] = (luma[:, 2:] - luma[:, :-2]) / 2.0
    gy[1:-1, :] = (luma[2:, :] - luma[:-2, :]) / 2.0
    mag = np.hypot(gx, gy).ravel()
    orient = np.mod(np.arctan2(gy, gx).ravel(), 2.0 * np.pi)
    bins = np.minimum((orient / (2.0 * np.pi) * 8).astype(np.int64), 7)
    if mask is not None:
        mag, bins = mag[mask], bins[mask]
    hist = np.bincount(bins, weights=mag, minlength=8) / max(mag.size, 1)

    feat = np.concatenate([means, _STD_SCALE * stds, _HIST_SCALE * hist])
    norm = np.linalg.norm(feat)
    return feat / norm if norm > 0 else feat


def prototype_classify(
    region: RasterImage, prototypes: np.ndarray, mask: np.ndarray | None = None
) -> tuple[int, float]:
    """Nearest prototype by cosine similarity; softmax confidence at T=0.1."""
    protos = np.asarray(prototypes, dtype=np.float64)
    if protos.ndim != 2 or protos.shape[0] == 0:
        raise ValueError("prototypes must be a non-empty (C, d) matrix")
    feat = region_feature(region, mask=mask)
    if np.linalg.norm(feat) == 0:
        return 0, 1.0 / protos.shape[0]
    norms = np.linalg.norm(protos, axis=1)
    sims = protos @ feat / np.where(norms > 0, norms, 1.0)
    z = sims / _PROTO_TEMPERATURE
    z -= z.max()
    soft = np.exp(z) / np.exp(z).sum()
    cls = int(np.argmax(sims))
    return cls, float(soft[cls])


class PrototypeProvider:
    """Desk-scale zero-shot stand-in: cosine matching against class prototypes."""

    def __init__(self, prototypes: np.ndarray, images: dict[str, RasterImage]):
        self.prototypes = np.asarray(prototypes, dtype=np.float64)
        self.images = images

    def classify_unit(self, unit: LabelingUnit) -> tuple[int, float]:
        img = self.images[unit.image_id]
        r0, c0, r1, c1 = unit.bbox(img.width)
        crop = RasterImage(data=np.ascontiguousarray(img.data[r0:r1, c0:c1]))
        rows, cols = np.divmod(unit.mask, img.width)
        local = (rows - r0) * (c1 - c0) + (cols - c0)
        return prototype_classify(crop, self.prototypes, mask=local)


class ScoreFileProvider:
    """Classifications imported from an external model's score file."""

    def __init__(self, table: dict[str, tuple[int, float]]):
        self.table = table

    @classmethod
    def from_file(cls, path) -> "ScoreFileProvider":
        rows = json.loads(Path(path).read_text())
        return cls({r["unit_id"]: (int(r["class"]), float(r["confidence"])) for r in rows})

    def classify_unit(self, unit: LabelingUnit) -> tuple[int, float]:
        return self.table[unit.id]


def initial_select(
    units: list[LabelingUnit],
    provider: EmbeddingProvider,
    n_select: int,
    num_classes: int,
    seed: int = 0,
) -> list[LabelingUnit]:
    """Class-balanced warm start: ceil(N/C) highest-confidence units per predicted class.

    Classes short on candidates are backfilled from the globally most
    confident leftovers; the result is truncated to exactly N units.
    """
    if not units:
        raise ValueError("empty unit pool")
    n_select = min(n_select, len(units))
    preds = [provider.classify_unit(u) for u in units]
    conf = {u.id: p[1] for u, p in zip(units, preds)}
    cls_of = {u.id: p[0] for u, p in zip(units, preds)}
    per_class = int(np.ceil(n_select / num_classes))

    chosen: list[LabelingUnit] = []
    rank: dict[str, int] = {}
    for c in range(num_classes):
        ranked = sorted(
            (u for u in units if cls_of[u.id] == c),
            key=lambda u: (-conf[u.id], u.id),
        )
        for k, u in enumerate(ranked[:per_class]):
            chosen.append(u)
            rank[u.id] = k

    if len(chosen) > n_select:
        # trim round-robin by within-class rank so every predicted class
        # keeps its most confident units
        chosen.sort(key=lambda u: (rank[u.id], -conf[u.id], u.id))
        chosen = chosen[:n_select]
    elif len(chosen) < n_select:
        chosen_ids = {u.id for u in chosen}
        leftovers = sorted(
            (u for u in units if u.id not in chosen_ids),
            key=lambda u: (-conf[u.id], u.id),
        )
        chosen.extend(leftovers[: n_select - len(chosen)])
    return chosen


def select_batch(
    candidate_units: list[LabelingUnit],
    scores: dict[str, UnitScore],
    batch_budget_pixels: int,
    strategy: str = STRATEGY_BALANCED,
    seed: int = 0,
) -> list[LabelingUnit]:
    """Greedy walk down the ranking, taking every unit that still fits.

    Oversized units are skipped so cheap units later in the ranking can
    fill the budget remainder; at return, no unchosen candidate fits.
    """
    if batch_budget_pixels <= 0:
        raise ValueError("budget must be positive")
    if strategy == STRATEGY_RANDOM:
        rng = np.random.default_rng(seed)
        ranked = [candidate_units[i] for i in rng.permutation(len(candidate_units))]
    elif strategy == STRATEGY_ENTROPY:
        ranked = sorted(candidate_units, key=lambda u: (-scores[u.id].info, u.id))
    elif strategy == STRATEGY_BALANCED:
        ranked = sorted(candidate_units, key=lambda u: (-scores[u.id].score, u.id))
    else:
        raise ValueError(f"unknown strategy {strategy!r}")

    taken = []
    spent = 0
    for u in ranked:
        if spent + u.cost <= batch_budget_pixels:
            taken.append(u)
            spent += u.cost
    return taken


def sample_candidate_pool(
    units: list[LabelingUnit], images_per_round: int = 100, seed: int = 0
) -> list[LabelingUnit]:
    """All units of a seeded uniform sample of images."""
    if not units:
        raise ValueError("empty unit pool")
    image_ids = sorted({u.image_id for u in units})
    if len(image_ids) > images_per_round:
        rng = np.random.default_rng(seed)
        picked = set(rng.choice(np.array(image_ids, dtype=object), size=images_per_round, replace=False))
    else:
        picked = set(image_ids)
    return [u for u in units if u.image_id in picked]

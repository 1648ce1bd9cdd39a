"""Closed-loop active-learning harness.

One run: partition images into labeling units, acquire an initial
class-balanced batch, then alternate acquisition / oracle (or human)
labeling / pseudo-label regeneration / retraining until the pixel
budget is spent, logging held-out metrics each iteration. Every
stochastic choice derives from the run seed, so a run is reproducible
bit for bit; a length-prefixed JSON journal makes it crash-resumable.
"""

from __future__ import annotations

import base64
import json
import struct
import time
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import model as toy
from .acquisition import (
    STRATEGY_BALANCED,
    STRATEGY_ENTROPY,
    STRATEGY_RANDOM,
    ClassStats,
    PrototypeProvider,
    UnitScore,
    balanced_score,
    initial_select,
    normalize_perf,
    region_feature,
    sample_candidate_pool,
    select_batch,
    uniform_stats,
)
from .edges import EdgeConfig
from .model import ModelParams, TrainConfig, TrainingSet, extract_features, forward
from .pseudo import PseudoConfig, generate_pseudo, global_threshold_select, ratio_thresholds
from .raster import (
    PROV_HUMAN,
    PROV_PSEUDO,
    UNLABELED,
    LabelMask,
    MetricReport,
    RasterImage,
    confusion_matrix,
)
from .synth import DatasetSpec, SynthDataset, load_dataset, synth_dataset
from .units import LabelingUnit, grid_units, partition_units

# seed-stream tags, combined with the run seed for independent generators
_SEED_INIT = 1
_SEED_POOL = 2
_SEED_SELECT = 3
_SEED_PARAMS = 4
_SEED_SPLIT = 5
_SEED_TRAIN = 6
_SEED_VAL = 7

# share of newly labeled units held out from training to measure honest
# per-class performance (the paper's labeled-data validation split)
VALIDATION_SHARE = 0.2


@dataclass(frozen=True)
class RunConfig:
    synth_spec: DatasetSpec | None = None
    dataset_dir: str | None = None
    synth_seed: int = 0
    strategy: str = STRATEGY_BALANCED
    region_size: int = 80
    initial_fraction: float = 0.05
    round_budget_pixels: int = 500 * 80 * 80
    total_budget_fraction: float = 0.20
    epochs_per_round: int = 50
    images_per_round: int = 100
    test_fraction: float = 0.25
    seed: int = 0
    d_emb: int = 16
    lambda_contrastive: float = 0.1
    num_anchors: int = 50
    pseudo_base: float = 0.5
    balance_center: str = "none"
    labeler: str = "oracle"
    edge_units: bool = True
    clip_init: bool = True
    perf_balance: bool = True
    pseudo: bool = True
    pseudo_balance: bool = True
    contrastive: bool = True
    contrastive_balance: bool = True
    edge: EdgeConfig = field(default_factory=EdgeConfig)

    def __post_init__(self):
        if not 0 < self.initial_fraction <= self.total_budget_fraction <= 1:
            raise ValueError("need 0 < initial_fraction <= total_budget_fraction <= 1")
        if self.synth_spec is None and self.dataset_dir is None:
            raise ValueError("either synth_spec or dataset_dir is required")

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["synth_spec"] = self.synth_spec.to_json() if self.synth_spec else None
        doc["edge"] = asdict(self.edge)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        if doc.get("synth_spec"):
            doc["synth_spec"] = DatasetSpec.from_json(doc["synth_spec"])
        doc["edge"] = EdgeConfig(**doc["edge"])
        return cls(**doc)


@dataclass(frozen=True)
class LogRecord:
    iteration: int
    budget_fraction: float
    per_class_iou: tuple[float, ...]
    miou: float
    mean_f1: float
    pseudo_pixel_counts: tuple[int, ...]
    wall_time: float

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "budget_fraction": self.budget_fraction,
            "per_class_iou": list(self.per_class_iou),
            "miou": self.miou,
            "mean_f1": self.mean_f1,
            "pseudo_pixel_counts": list(self.pseudo_pixel_counts),
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LogRecord":
        return cls(
            iteration=doc["iteration"],
            budget_fraction=doc["budget_fraction"],
            per_class_iou=tuple(doc["per_class_iou"]),
            miou=doc["miou"],
            mean_f1=doc["mean_f1"],
            pseudo_pixel_counts=tuple(doc["pseudo_pixel_counts"]),
            wall_time=doc["wall_time"],
        )


@dataclass
class RunLog:
    records: list[LogRecord] = field(default_factory=list)

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization: everything except wall-clock timings."""
        lines = []
        for r in self.records:
            doc = r.to_json()
            del doc["wall_time"]
            lines.append(json.dumps(doc, sort_keys=True, separators=(",", ":")))
        return ("\n".join(lines) + "\n").encode()

    def write_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r.to_json(), sort_keys=True, separators=(",", ":")) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "RunLog":
        records = [LogRecord.from_json(json.loads(line)) for line in Path(path).read_text().splitlines() if line]
        return cls(records=records)

    @property
    def final(self) -> LogRecord:
        return self.records[-1]


def oracle_label(unit: LabelingUnit, truth: LabelMask) -> np.ndarray:
    """Ground-truth class codes for the unit's pixels, in mask order."""
    flat = truth.labels.ravel()
    if unit.mask.max() >= flat.size:
        raise ValueError(f"unit {unit.id} extends beyond the truth mask")
    classes = flat[unit.mask]
    if np.any(classes == UNLABELED):
        raise ValueError(f"truth is unlabeled inside unit {unit.id}")
    return classes


class Journal:
    """Append-only, length-prefixed JSON records; tolerant of a torn tail."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = None

    def open(self, fresh: bool = False):
        self._fh = open(self.path, "wb" if fresh else "ab")
        return self

    def append(self, record: dict) -> None:
        payload = json.dumps(record, sort_keys=True, separators=(",", ":")).encode()
        self._fh.write(struct.pack("<I", len(payload)) + payload)
        self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None

    @staticmethod
    def read_all(path) -> list[dict]:
        buf = Path(path).read_bytes()
        out = []
        pos = 0
        while pos + 4 <= len(buf):
            (n,) = struct.unpack_from("<I", buf, pos)
            if pos + 4 + n > len(buf):
                break  # torn tail from a crash mid-write
            out.append(json.loads(buf[pos + 4 : pos + 4 + n]))
            pos += 4 + n
        return out


def _b64_array(a: np.ndarray) -> str:
    return base64.b64encode(zlib.compress(np.ascontiguousarray(a).tobytes())).decode()


def _unb64_array(s: str, dtype, shape) -> np.ndarray:
    return np.frombuffer(zlib.decompress(base64.b64decode(s)), dtype=dtype).reshape(shape).copy()


class Runner:
    """Owns the run state; one instance drives one (possibly resumed) run."""

    def __init__(self, cfg: RunConfig, labeler=None, journal_path=None):
        self.cfg = cfg
        self.labeler = labeler  # callable(units, runner) -> dict unit_id -> class codes
        self.journal = Journal(journal_path).open(fresh=True) if journal_path else None
        self._load_dataset()
        self._split()
        self._partition()
        self._feature_cache: dict[str, np.ndarray] = {}

        self.labels: dict[str, LabelMask] = {
            i: LabelMask.empty(self.dataset.images[i].height, self.dataset.images[i].width)
            for i in self.train_ids
        }
        self.labeled_ids: list[str] = []
        self.val_unit_ids: set[str] = set()
        self.labeled_pixels = 0
        self.iteration = 0
        self.stats: ClassStats | None = None
        self.pseudo_counts = np.zeros(self.num_classes, dtype=np.int64)
        self.params: ModelParams | None = None
        self.log = RunLog()
        self._start = time.perf_counter()
        if self.journal:
            self.journal.append({"type": "config", "config": cfg.to_json()})

    # -- construction ---------------------------------------------------

    def _load_dataset(self):
        cfg = self.cfg
        if cfg.synth_spec is not None:
            self.dataset: SynthDataset = synth_dataset(cfg.synth_seed, cfg.synth_spec)
        else:
            self.dataset = load_dataset(cfg.dataset_dir)
        self.num_classes = self.dataset.spec.num_classes

    def _split(self):
        """Seeded test/train split; every class must appear on both sides.

        A rare class missing from the test truth would make its IoU
        unmeasurable (and min-class metrics meaningless), so candidate
        splits are retried deterministically until coverage holds.
        """
        ids = list(self.dataset.image_ids)
        n_test = max(1, round(len(ids) * self.cfg.test_fraction))
        classes = np.arange(self.num_classes)

        def covers(image_ids) -> bool:
            seen = np.zeros(self.num_classes, dtype=bool)
            for i in image_ids:
                seen |= np.isin(classes, self.dataset.truth[i].labels)
            return bool(seen.all())

        for attempt in range(64):
            rng = np.random.default_rng([self.cfg.seed, _SEED_SPLIT, attempt])
            test = set(rng.choice(np.array(ids, dtype=object), size=n_test, replace=False))
            train = [i for i in ids if i not in test]
            if train and covers(test) and covers(train):
                self.test_ids = sorted(test)
                self.train_ids = train
                return
        raise ValueError("no test/train split covers every class; dataset too sparse")

    def _partition(self):
        cfg = self.cfg
        self.units: dict[str, LabelingUnit] = {}
        self.units_by_image: dict[str, list[str]] = {}
        for image_id in self.train_ids:
            img = self.dataset.images[image_id]
            if cfg.edge_units:
                units = partition_units(
                    img, cfg.edge, cfg.region_size, cfg.initial_fraction, image_id=image_id
                )
            else:
                units = grid_units((img.height, img.width), cfg.region_size, image_id=image_id)
            self.units_by_image[image_id] = [u.id for u in units]
            for u in units:
                self.units[u.id] = u
        self.total_pool_pixels = sum(
            self.dataset.images[i].height * self.dataset.images[i].width for i in self.train_ids
        )
        cheapest = min(u.cost for u in self.units.values())
        if int(self.total_pool_pixels * cfg.total_budget_fraction) < cheapest:
            raise ValueError("budget below one unit's cost")

    # -- helpers ----------------------------------------------------------

    def features(self, image_id: str) -> np.ndarray:
        if image_id not in self._feature_cache:
            self._feature_cache[image_id] = extract_features(self.dataset.images[image_id])
        return self._feature_cache[image_id]

    def _train_config(self, contrastive_on: bool) -> TrainConfig:
        cfg = self.cfg
        lam = cfg.lambda_contrastive if (cfg.contrastive and contrastive_on) else 0.0
        return TrainConfig(
            d_emb=cfg.d_emb,
            lambda_contrastive=lam,
            num_anchors=cfg.num_anchors,
            epochs=cfg.epochs_per_round,
            seed=_mix(cfg.seed, _SEED_TRAIN),
        )

    @property
    def budget_fraction(self) -> float:
        return self.labeled_pixels / self.total_pool_pixels

    @property
    def unlabeled_units(self) -> list[LabelingUnit]:
        labeled = set(self.labeled_ids)
        return [self.units[uid] for uid in sorted(self.units) if uid not in labeled]

    def _apply_labels(self, unit: LabelingUnit, classes: np.ndarray) -> None:
        if unit.id in set(self.labeled_ids):
            return  # idempotent: budget counted once
        mask = self.labels[unit.image_id]
        labels = mask.labels.copy().ravel()
        prov = mask.provenance.copy().ravel()
        labels[unit.mask] = classes
        prov[unit.mask] = PROV_HUMAN
        shape = (mask.height, mask.width)
        self.labels[unit.image_id] = LabelMask(labels=labels.reshape(shape), provenance=prov.reshape(shape))
        self.labeled_ids.append(unit.id)
        self.labeled_pixels += unit.cost
        if self.journal:
            self.journal.append(
                {
                    "type": "label",
                    "iteration": self.iteration,
                    "unit_id": unit.id,
                    "classes": _b64_array(classes.astype(np.uint8)),
                }
            )

    def _label_units(self, units: list[LabelingUnit]) -> None:
        before = set(self.labeled_ids)
        if self.labeler is None:
            for u in units:
                self._apply_labels(u, oracle_label(u, self.dataset.truth[u.image_id]))
        else:
            for uid, classes in self.labeler(units, self).items():
                self._apply_labels(self.units[uid], classes)
        fresh = sorted(uid for uid in self.labeled_ids if uid not in before)
        n_val = int(len(fresh) * VALIDATION_SHARE)
        if n_val:
            rng = np.random.default_rng([self.cfg.seed, _SEED_VAL, self.iteration])
            picked = rng.choice(np.array(fresh, dtype=object), size=n_val, replace=False)
            self.val_unit_ids.update(str(u) for u in picked)

    def _build_provider(self) -> PrototypeProvider:
        """Prototype per class rendered from its style: the zero-shot prior.

        Each prototype averages the features of several style draws so it
        sits at the class centroid rather than on one texture sample.
        """
        protos = []
        rng = np.random.default_rng([self.cfg.seed, _SEED_INIT, 1])
        for style in self.dataset.spec.classes:
            feats = []
            for _ in range(8):
                shift = rng.standard_normal(3) * style.jitter
                patch = np.clip(
                    np.array(style.color, dtype=np.float64)
                    + shift
                    + rng.standard_normal((32, 32, 3)) * style.noise,
                    0,
                    255,
                ).astype(np.uint8)
                feats.append(region_feature(RasterImage(data=patch)))
            proto = np.mean(feats, axis=0)
            protos.append(proto / np.linalg.norm(proto))
        return PrototypeProvider(np.array(protos), self.dataset.images)

    def _initial_units(self) -> list[LabelingUnit]:
        cfg = self.cfg
        budget_px = int(self.total_pool_pixels * cfg.initial_fraction)
        pool = self.unlabeled_units
        if cfg.clip_init:
            mean_cost = sum(u.cost for u in pool) / len(pool)
            n = max(1, round(budget_px / mean_cost))
            return initial_select(pool, self._build_provider(), n, self.num_classes, seed=_mix(cfg.seed, _SEED_INIT))
        rng = np.random.default_rng([cfg.seed, _SEED_INIT])
        order = rng.permutation(len(pool))
        taken, spent = [], 0
        for i in order:
            if spent + pool[i].cost > budget_px:
                break
            taken.append(pool[i])
            spent += pool[i].cost
        return taken

    # -- stats / training / evaluation -----------------------------------

    def _infer(self, image_id: str) -> tuple[np.ndarray, "np.ndarray"]:
        emb, pm = forward(self.params, self.features(image_id))
        return emb, pm

    def _val_px(self, image_id: str) -> np.ndarray:
        """Boolean plane of pixels belonging to held-out validation units."""
        img = self.dataset.images[image_id]
        out = np.zeros(img.height * img.width, dtype=bool)
        for uid in self.units_by_image[image_id]:
            if uid in self.val_unit_ids:
                out[self.units[uid].mask] = True
        return out.reshape(img.height, img.width)

    def _measure_stats(self) -> ClassStats:
        """Per-class IoU on labeled pixels held out from training.

        The validation units give an honest estimate; if none exist yet,
        all human-labeled pixels are used as a fallback.
        """
        for use_val in (True, False):
            conf = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
            for image_id in self.train_ids:
                mask = self.labels[image_id]
                keep = mask.provenance == PROV_HUMAN
                if use_val:
                    keep = keep & self._val_px(image_id)
                if not keep.any():
                    continue
                _, pm = self._infer(image_id)
                pred = pm.data.argmax(axis=2)
                t = mask.labels[keep].astype(np.int64)
                p = pred[keep]
                conf += np.bincount(t * self.num_classes + p, minlength=self.num_classes**2).reshape(
                    self.num_classes, self.num_classes
                )
            if conf.sum() > 0:
                break
        tp = np.diag(conf).astype(np.float64)
        denom = conf.sum(axis=0) + conf.sum(axis=1) - tp
        raw = np.where(denom > 0, tp / np.where(denom > 0, denom, 1), 0.0)
        return normalize_perf(raw)

    def _blank_val(self, image_id: str, mask: LabelMask) -> LabelMask:
        val = self._val_px(image_id)
        if not val.any():
            return mask
        labels = mask.labels.copy()
        prov = mask.provenance.copy()
        labels[val] = UNLABELED
        prov[val] = 0
        return LabelMask(labels=labels, provenance=prov)

    def _training_masks(self) -> dict[str, LabelMask]:
        """Human labels plus freshly regenerated pseudo-labels.

        Validation-unit pixels are blanked after pseudo generation, so
        they neither train the model nor receive pseudo-labels.
        """
        cfg = self.cfg
        self.pseudo_counts = np.zeros(self.num_classes, dtype=np.int64)
        if not (cfg.pseudo and self.params is not None and self.stats is not None):
            return {i: self._blank_val(i, self.labels[i]) for i in self.train_ids}
        out = {}
        thresholds = ratio_thresholds(self.stats.raw_iou, PseudoConfig(base=cfg.pseudo_base))
        for image_id in self.train_ids:
            _, pm = self._infer(image_id)
            base_mask = self.labels[image_id]
            balanced = generate_pseudo(pm, base_mask, thresholds)
            if cfg.pseudo_balance:
                merged = balanced
            else:
                # class-agnostic ablation: one global confidence cutoff
                # admitting the same total pixel count
                total = int((balanced.provenance == PROV_PSEUDO).sum())
                merged = global_threshold_select(pm, base_mask, total)
            out[image_id] = self._blank_val(image_id, merged)
            self.pseudo_counts += np.bincount(
                merged.labels[merged.provenance == PROV_PSEUDO], minlength=self.num_classes
            )[: self.num_classes]
        return out

    def _train(self) -> None:
        cfg = self.cfg
        masks = self._training_masks()
        pairs = [(self.features(i), masks[i]) for i in self.train_ids if masks[i].decided.any()]
        train_set = TrainingSet.from_pairs(pairs)
        if self.params is None:
            d_feat = toy.feature_dim(self.dataset.images[self.train_ids[0]].channels)
            self.params = ModelParams.init(d_feat, self.num_classes, d_emb=cfg.d_emb, seed=_mix(cfg.seed, _SEED_PARAMS))
        # before any measured stats, contrastive anchors have no basis
        contrastive_on = self.stats is not None
        raw = self.stats.raw_iou if self.stats is not None else np.full(self.num_classes, 0.5)
        anchors = None if cfg.contrastive_balance else set(range(self.num_classes))
        self.params = toy.fit(
            self.params, train_set, raw, self._train_config(contrastive_on), anchor_classes=anchors
        )

    def eval_checkpoint(self) -> MetricReport:
        conf = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        for image_id in self.test_ids:
            _, pm = self._infer(image_id)
            pred = LabelMask.from_labels(pm.data.argmax(axis=2).astype(np.uint8))
            conf += confusion_matrix(pred, self.dataset.truth[image_id], self.num_classes)
        return MetricReport.from_confusion(conf)

    def _log_iteration(self) -> None:
        report = self.eval_checkpoint()
        record = LogRecord(
            iteration=self.iteration,
            budget_fraction=self.budget_fraction,
            per_class_iou=tuple(float(v) for v in report.per_class_iou),
            miou=report.miou,
            mean_f1=report.mean_f1,
            pseudo_pixel_counts=tuple(int(v) for v in self.pseudo_counts),
            wall_time=time.perf_counter() - self._start,
        )
        self.log.records.append(record)
        if self.journal:
            self.journal.append({"type": "log", "record": record.to_json()})
            self.journal.append({"type": "checkpoint", "state": self._state_blob()})

    # -- acquisition rounds ----------------------------------------------

    def _score_pool(self, pool: list[LabelingUnit]) -> dict[str, UnitScore]:
        """Unit scores with per-image entropy/argmax maps computed once.

        Equivalent to balanced_score() per unit, just without re-deriving
        the full-image argmax for every unit.
        """
        cfg = self.cfg
        stats = self.stats if (cfg.perf_balance and self.stats is not None) else uniform_stats(self.num_classes)
        area = float(cfg.region_size * cfg.region_size)
        cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        scores = {}
        for u in pool:
            if u.image_id not in cache:
                _, pm = self._infer(u.image_id)
                p = pm.data
                with np.errstate(divide="ignore", invalid="ignore"):
                    ent = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=2).ravel()
                cache[u.image_id] = (ent, p.argmax(axis=2).ravel())
            ent, amax = cache[u.image_id]
            info = float(ent[u.mask].mean()) * area
            n_c = np.bincount(amax[u.mask], minlength=self.num_classes) / u.mask.size
            balance = float((n_c / stats.normalized_perf).sum())
            scores[u.id] = UnitScore(
                unit_id=u.id, info=info, balance=balance, score=info / (1.0 + np.exp(-balance))
            )
        if cfg.balance_center == "pool-mean" and scores:
            mean_p = float(np.mean([s.balance for s in scores.values()]))
            for uid, s in scores.items():
                centered = s.balance - mean_p
                scores[uid] = UnitScore(
                    unit_id=s.unit_id,
                    info=s.info,
                    balance=s.balance,
                    score=s.info / (1.0 + np.exp(-centered)),
                )
        return scores

    def _effective_strategy(self) -> str:
        if self.cfg.strategy == STRATEGY_BALANCED and not self.cfg.perf_balance:
            return STRATEGY_ENTROPY
        return self.cfg.strategy

    def _acquisition_round(self) -> bool:
        cfg = self.cfg
        total_budget = int(self.total_pool_pixels * cfg.total_budget_fraction)
        round_budget = min(cfg.round_budget_pixels, total_budget - self.labeled_pixels)
        if round_budget <= 0:
            return False
        pool = sample_candidate_pool(
            self.unlabeled_units, cfg.images_per_round, seed=[cfg.seed, _SEED_POOL, self.iteration]
        )
        if not pool:
            return False
        strategy = self._effective_strategy()
        scores = self._score_pool(pool) if strategy != STRATEGY_RANDOM else {}
        chosen = select_batch(pool, scores, round_budget, strategy, seed=[cfg.seed, _SEED_SELECT, self.iteration])
        if not chosen:
            return False
        if self.journal:
            self.journal.append(
                {"type": "round", "iteration": self.iteration, "selected": [u.id for u in chosen]}
            )
        self._label_units(chosen)
        self._train()
        self.stats = self._measure_stats()
        self._log_iteration()
        return True

    def run(self, stop_after_iteration: int | None = None) -> RunLog:
        if self.iteration == 0 and not self.labeled_ids:
            initial = self._initial_units()
            if self.journal:
                self.journal.append({"type": "round", "iteration": 0, "selected": [u.id for u in initial]})
            self._label_units(initial)
            self._train()
            self.stats = self._measure_stats()
            self._log_iteration()
        while self.labeled_pixels < int(self.total_pool_pixels * self.cfg.total_budget_fraction):
            if stop_after_iteration is not None and self.iteration >= stop_after_iteration:
                break
            self.iteration += 1
            if not self._acquisition_round():
                break
        if self.journal:
            self.journal.close()
        return self.log

    # -- journaling -------------------------------------------------------

    def _state_blob(self) -> dict:
        p = self.params
        return {
            "iteration": self.iteration,
            "labeled_pixels": self.labeled_pixels,
            "labeled_ids": list(self.labeled_ids),
            "val_unit_ids": sorted(self.val_unit_ids),
            "pseudo_counts": [int(v) for v in self.pseudo_counts],
            "stats_raw": [float(v) for v in self.stats.raw_iou] if self.stats else None,
            "params": {
                "w_embed": _b64_array(p.w_embed),
                "b_embed": _b64_array(p.b_embed),
                "w_cls": _b64_array(p.w_cls),
                "b_cls": _b64_array(p.b_cls),
                "epoch": p.epoch,
                "d_feat": p.d_feat,
                "d_emb": p.d_emb,
                "num_classes": p.num_classes,
            },
            "labels": {
                i: {
                    "labels": _b64_array(self.labels[i].labels),
                    "provenance": _b64_array(self.labels[i].provenance),
                    "shape": list(self.labels[i].labels.shape),
                }
                for i in self.train_ids
            },
            "log": [r.to_json() for r in self.log.records],
        }

    def _restore(self, state: dict) -> None:
        self.iteration = state["iteration"]
        self.labeled_pixels = state["labeled_pixels"]
        self.labeled_ids = list(state["labeled_ids"])
        self.val_unit_ids = set(state["val_unit_ids"])
        self.pseudo_counts = np.array(state["pseudo_counts"], dtype=np.int64)
        self.stats = normalize_perf(np.array(state["stats_raw"])) if state["stats_raw"] else None
        ps = state["params"]
        self.params = ModelParams(
            w_embed=_unb64_array(ps["w_embed"], np.float64, (ps["d_feat"], ps["d_emb"])),
            b_embed=_unb64_array(ps["b_embed"], np.float64, (ps["d_emb"],)),
            w_cls=_unb64_array(ps["w_cls"], np.float64, (ps["d_emb"], ps["num_classes"])),
            b_cls=_unb64_array(ps["b_cls"], np.float64, (ps["num_classes"],)),
            epoch=ps["epoch"],
        )
        for image_id, blob in state["labels"].items():
            shape = tuple(blob["shape"])
            self.labels[image_id] = LabelMask(
                labels=_unb64_array(blob["labels"], np.uint8, shape),
                provenance=_unb64_array(blob["provenance"], np.uint8, shape),
            )
        self.log = RunLog(records=[LogRecord.from_json(r) for r in state["log"]])


def _mix(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def run_loop(
    cfg: RunConfig,
    labeler=None,
    journal_path=None,
    stop_after_iteration: int | None = None,
) -> RunLog:
    return Runner(cfg, labeler=labeler, journal_path=journal_path).run(stop_after_iteration)


def resume_run(journal_path, labeler=None) -> RunLog:
    """Rebuild state from the last complete checkpoint and run to completion."""
    records = Journal.read_all(journal_path)
    if not records or records[0]["type"] != "config":
        raise ValueError("journal missing config record")
    cfg = RunConfig.from_json(records[0]["config"])
    checkpoints = [r for r in records if r["type"] == "checkpoint"]
    runner = Runner(cfg, labeler=labeler, journal_path=None)
    if checkpoints:
        runner._restore(checkpoints[-1]["state"])
    return runner.run()

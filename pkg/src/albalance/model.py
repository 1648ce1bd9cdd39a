"""Desk-scale differentiable segmenter with hand-rolled gradients.

Per-pixel handcrafted features feed a tanh linear embedding and a
softmax classifier. Training minimizes cross-entropy over decided
pixels plus a weighted supervised contrastive term whose anchors come
from poorly performing classes; every gradient (including through the
l2 normalization and tanh) is analytic and checkable against finite
differences.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import io as alio
from .raster import PROV_HUMAN, LabelMask, ProbabilityMap, RasterError, RasterImage


@dataclass(frozen=True)
class TrainConfig:
    d_emb: int = 16
    lambda_contrastive: float = 0.1
    tau: float = 0.1
    num_anchors: int = 50
    positives_cap: int = 512
    negatives_cap: int = 1024
    epochs: int = 50
    batch_size: int = 1024
    lr: float = 1e-2
    gamma: float = 0.998
    weight_decay: float = 1e-4
    momentum: float = 0.95
    seed: int = 0


@dataclass(frozen=True)
class ModelParams:
    w_embed: np.ndarray
    b_embed: np.ndarray
    w_cls: np.ndarray
    b_cls: np.ndarray
    epoch: int = 0

    def __post_init__(self):
        for a in (self.w_embed, self.b_embed, self.w_cls, self.b_cls):
            if not np.all(np.isfinite(a)):
                raise ValueError("parameters must be finite")
        d_feat, d_emb = self.w_embed.shape
        if self.b_embed.shape != (d_emb,) or self.w_cls.shape[0] != d_emb:
            raise ValueError("inconsistent parameter dimensions")
        if self.b_cls.shape != (self.w_cls.shape[1],):
            raise ValueError("inconsistent classifier bias")

    @property
    def d_feat(self) -> int:
        return self.w_embed.shape[0]

    @property
    def d_emb(self) -> int:
        return self.w_embed.shape[1]

    @property
    def num_classes(self) -> int:
        return self.w_cls.shape[1]

    @classmethod
    def init(cls, d_feat: int, num_classes: int, d_emb: int = 16, seed: int = 0) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(
            w_embed=rng.normal(0.0, 0.3, size=(d_feat, d_emb)),
            b_embed=np.zeros(d_emb),
            w_cls=rng.normal(0.0, 0.3, size=(d_emb, num_classes)),
            b_cls=np.zeros(num_classes),
        )


def feature_dim(channels: int) -> int:
    return 3 * channels + 1


def extract_features(img: RasterImage) -> np.ndarray:
    """(H, W, d_feat) map: raw channels, 5x5 window mean/std, Sobel magnitude.

    All channels are scaled to [0, 1]; borders replicate edge pixels.
    """
    data = img.data.astype(np.float64) / 255.0
    if data.ndim == 2:
        data = data[:, :, None]
    planes = [data[:, :, c] for c in range(data.shape[2])]
    for c in range(data.shape[2]):
        planes.append(ndimage.uniform_filter(data[:, :, c], size=5, mode="nearest"))
    for c in range(data.shape[2]):
        m = ndimage.uniform_filter(data[:, :, c], size=5, mode="nearest")
        m2 = ndimage.uniform_filter(data[:, :, c] ** 2, size=5, mode="nearest")
        planes.append(np.sqrt(np.maximum(m2 - m * m, 0.0)))
    luma = img.luma() / 255.0
    gx = ndimage.correlate(luma, np.array([[-1.0, 0, 1], [-2, 0, 2], [-1, 0, 1]]), mode="nearest")
    gy = ndimage.correlate(luma, np.array([[-1.0, -2, -1], [0, 0, 0], [1, 2, 1]]), mode="nearest")
    planes.append(np.hypot(gx, gy))
    return np.stack(planes, axis=2)


def forward(params: ModelParams, features: np.ndarray) -> tuple[np.ndarray, ProbabilityMap]:
    """Per-pixel embeddings and the softmax probability map."""
    if features.ndim != 3 or features.shape[2] != params.d_feat:
        raise RasterError(f"features must be (H, W, {params.d_feat})")
    h, w, _ = features.shape
    emb, probs = _forward_flat(params, features.reshape(-1, params.d_feat))
    return emb.reshape(h, w, params.d_emb), ProbabilityMap(data=probs.reshape(h, w, params.num_classes))


def _forward_flat(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    emb = np.tanh(x @ params.w_embed + params.b_embed)
    logits = emb @ params.w_cls + params.b_cls
    logits = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(logits)
    return emb, ez / ez.sum(axis=1, keepdims=True)


def poor_classes(raw_iou: np.ndarray) -> set[int]:
    """Classes below the mean IoU; the single argmin if none are strictly below."""
    raw = np.asarray(raw_iou, dtype=np.float64)
    poor = set(np.nonzero(raw < raw.mean() - 1e-12)[0].tolist())
    return poor if poor else {int(raw.argmin())}


@dataclass(frozen=True)
class ContrastiveBatch:
    """Unit-norm anchor vectors with per-anchor positive/negative sets."""

    anchors: np.ndarray
    positives: list[np.ndarray]
    negatives: list[np.ndarray]
    tau: float = 0.1

    def __post_init__(self):
        if len(self.positives) != len(self.anchors) or len(self.negatives) != len(self.anchors):
            raise ValueError("one positive and one negative set per anchor")
        for block in (self.anchors, *self.positives, *self.negatives):
            if block.size and np.abs(np.linalg.norm(block, axis=-1) - 1.0).max() > 1e-9:
                raise ValueError("contrastive features must be l2-normalized")


def contrastive_loss(batch: ContrastiveBatch) -> float:
    """Mean InfoNCE-style loss over anchors, log-sum-exp stabilized.

    Anchors with no positives or no negatives are skipped; if every
    anchor is skipped the loss is 0 and a warning is emitted.
    """
    total = 0.0
    used = 0
    for anchor, pos, neg in zip(batch.anchors, batch.positives, batch.negatives):
        if pos.size == 0 or neg.size == 0:
            continue
        s = pos @ anchor / batch.tau
        t = neg @ anchor / batch.tau
        m = max(s.max(), t.max())
        neg_mass = np.exp(t - m).sum()
        lse = m + np.log(np.exp(s - m) + neg_mass)
        total += float((lse - s).mean())
        used += 1
    if used == 0:
        warnings.warn("all contrastive anchors were skipped", stacklevel=2)
        return 0.0
    return total / used


@dataclass(frozen=True)
class ContrastiveSample:
    """Index view of a contrastive batch into a flat pixel block."""

    anchor_idx: np.ndarray
    positive_idx: list[np.ndarray]
    negative_idx: list[np.ndarray]


def sample_contrastive(
    labels: np.ndarray,
    provenance: np.ndarray,
    poor: set[int],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> ContrastiveSample:
    """Seeded anchor/positive/negative index draw from HUMAN-labeled pixels."""
    human = provenance == PROV_HUMAN
    pool = np.nonzero(human & np.isin(labels, sorted(poor)))[0]
    if pool.size > cfg.num_anchors:
        pool = np.sort(rng.choice(pool, size=cfg.num_anchors, replace=False))
    by_class = {c: np.nonzero(human & (labels == c))[0] for c in np.unique(labels[human])}
    anchor_idx, pos_lists, neg_lists = [], [], []
    all_human = np.nonzero(human)[0]
    for a in pool:
        c = labels[a]
        same = by_class[c]
        pos = same[same != a]
        neg = all_human[labels[all_human] != c]
        if pos.size > cfg.positives_cap:
            pos = np.sort(rng.choice(pos, size=cfg.positives_cap, replace=False))
        if neg.size > cfg.negatives_cap:
            neg = np.sort(rng.choice(neg, size=cfg.negatives_cap, replace=False))
        anchor_idx.append(a)
        pos_lists.append(pos)
        neg_lists.append(neg)
    return ContrastiveSample(
        anchor_idx=np.asarray(anchor_idx, dtype=np.int64),
        positive_idx=pos_lists,
        negative_idx=neg_lists,
    )


def _contrastive_loss_grad(
    emb: np.ndarray, sample: ContrastiveSample, tau: float
) -> tuple[float, np.ndarray, bool]:
    """Loss and gradient w.r.t. the raw (unnormalized) embedding rows."""
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    safe = np.where(norms > 1e-12, norms, 1.0)
    unit = emb / safe

    g_unit = np.zeros_like(emb)
    total = 0.0
    used = 0
    for a, pos, neg in zip(sample.anchor_idx, sample.positive_idx, sample.negative_idx):
        if pos.size == 0 or neg.size == 0:
            continue
        ua, up, un = unit[a], unit[pos], unit[neg]
        s = up @ ua / tau
        t = un @ ua / tau
        m = max(s.max(), t.max())
        exp_t = np.exp(t - m)
        neg_mass = exp_t.sum()
        lse = m + np.log(np.exp(s - m) + neg_mass)
        total += float((lse - s).mean())
        used += 1

        inv_p = 1.0 / s.size
        ds = (np.exp(s - lse) - 1.0) * inv_p
        # dL/dt_m = sum_k exp(t_m - lse_k) / P
        dt = exp_t * (np.exp(-(lse - m)).sum() * inv_p)
        g_unit[a] += (ds @ up + dt @ un) / tau
        g_unit[pos] += ds[:, None] * (ua / tau)
        g_unit[neg] += dt[:, None] * (ua / tau)

    if used == 0:
        return 0.0, np.zeros_like(emb), True
    g_unit /= used
    # back through x / ||x||: g = (g_unit - (g_unit . unit) unit) / ||x||
    proj = (g_unit * unit).sum(axis=1, keepdims=True)
    g_emb = (g_unit - proj * unit) / safe
    g_emb[norms.ravel() <= 1e-12] = 0.0
    return total / used, g_emb, False


def loss_and_grad(
    params: ModelParams,
    features: np.ndarray,
    labels: LabelMask,
    raw_iou: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
) -> tuple[float, dict[str, np.ndarray]]:
    """Cross-entropy + lambda * contrastive loss with analytic gradients.

    The contrastive batch is drawn with a generator seeded by cfg.seed,
    so repeated calls with identical inputs are bit-reproducible.
    """
    h, w, d = features.shape
    flat_labels = labels.labels.ravel()
    flat_prov = labels.provenance.ravel()
    decided = np.nonzero(labels.decided.ravel())[0]
    if decided.size == 0:
        raise RasterError("no decided pixels to train on")
    x = features.reshape(-1, d)[decided]
    y = flat_labels[decided].astype(np.int64)
    prov = flat_prov[decided]
    rng = np.random.default_rng(cfg.seed)
    return _loss_and_grad_flat(params, x, y, prov, raw_iou, cfg, rng)


def _loss_and_grad_flat(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    prov: np.ndarray,
    raw_iou: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
    sample: ContrastiveSample | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    n = x.shape[0]
    emb, probs = _forward_flat(params, x)

    ce = float(-np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean())
    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n
    g_emb = d_logits @ params.w_cls.T

    con = 0.0
    if cfg.lambda_contrastive != 0.0:
        if sample is None:
            sample = sample_contrastive(y, prov, poor_classes(raw_iou), cfg, rng)
        con, g_emb_con, _ = _contrastive_loss_grad(emb, sample, cfg.tau)
        g_emb = g_emb + cfg.lambda_contrastive * g_emb_con

    dz = g_emb * (1.0 - emb * emb)
    grads = {
        "w_embed": x.T @ dz,
        "b_embed": dz.sum(axis=0),
        "w_cls": emb.T @ d_logits,
        "b_cls": d_logits.sum(axis=0),
    }
    return ce + cfg.lambda_contrastive * con, grads


@dataclass
class TrainingSet:
    """Flat decided-pixel block assembled from (features, labels) pairs."""

    x: np.ndarray
    y: np.ndarray
    prov: np.ndarray

    @classmethod
    def from_pairs(cls, pairs: list[tuple[np.ndarray, LabelMask]]) -> "TrainingSet":
        xs, ys, ps = [], [], []
        for features, mask in pairs:
            decided = np.nonzero(mask.decided.ravel())[0]
            if decided.size == 0:
                continue
            xs.append(features.reshape(-1, features.shape[2])[decided])
            ys.append(mask.labels.ravel()[decided].astype(np.int64))
            ps.append(mask.provenance.ravel()[decided])
        if not xs:
            raise RasterError("no decided pixels in the training slice")
        return cls(x=np.concatenate(xs), y=np.concatenate(ys), prov=np.concatenate(ps))


def fit(
    params: ModelParams,
    train: TrainingSet,
    raw_iou: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    anchor_classes: set[int] | None = None,
) -> ModelParams:
    """Minibatch SGD with momentum/weight decay on the decided-pixel block.

    Each epoch reshuffles the pixels with a per-epoch seeded generator
    and draws a fresh batch-internal contrastive sample per step; the
    learning rate decays as lr * gamma**epoch against the params'
    persistent epoch counter. Anchors default to the poorly performing
    classes unless an explicit set is given.
    """
    state = {k: getattr(params, k).copy() for k in ("w_embed", "b_embed", "w_cls", "b_cls")}
    velocity = {k: np.zeros_like(v) for k, v in state.items()}
    poor = anchor_classes if anchor_classes is not None else poor_classes(raw_iou)
    n = train.x.shape[0]
    epoch = params.epoch
    for _ in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = rng.permutation(n)
        lr = cfg.lr * cfg.gamma**epoch
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            bx, by, bp = train.x[idx], train.y[idx], train.prov[idx]
            sample = (
                sample_contrastive(by, bp, poor, cfg, rng)
                if cfg.lambda_contrastive != 0.0
                else None
            )
            current = ModelParams(**state, epoch=epoch)
            loss, grads = _loss_and_grad_flat(current, bx, by, bp, raw_iou, cfg, rng, sample)
            if not np.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch}")
            with np.errstate(over="ignore"):  # divergence is caught below
                for k in state:
                    g = grads[k] + cfg.weight_decay * state[k]
                    velocity[k] = cfg.momentum * velocity[k] + g
                    state[k] = state[k] - lr * velocity[k]
        if not all(np.all(np.isfinite(v)) for v in state.values()):
            raise FloatingPointError(f"training diverged at epoch {epoch}")
        epoch += 1
    return ModelParams(**state, epoch=epoch)


def save_params(path, params: ModelParams, seed: int = 0) -> None:
    """Flat tensor plus a JSON sidecar describing the dimensions."""
    flat = np.concatenate([params.w_embed.ravel(), params.b_embed, params.w_cls.ravel(), params.b_cls])
    alio.write_array(path, flat[None, :])
    Path(str(path) + ".json").write_text(
        json.dumps(
            {
                "d_feat": params.d_feat,
                "d_emb": params.d_emb,
                "num_classes": params.num_classes,
                "seed": seed,
                "epoch": params.epoch,
            }
        )
    )


def load_params(path) -> ModelParams:
    meta = json.loads(Path(str(path) + ".json").read_text())
    flat = alio.read_array(path).ravel()
    d_feat, d_emb, c = meta["d_feat"], meta["d_emb"], meta["num_classes"]
    sizes = [d_feat * d_emb, d_emb, d_emb * c, c]
    if flat.size != sum(sizes):
        raise ValueError("parameter payload does not match sidecar dimensions")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return ModelParams(
        w_embed=parts[0].reshape(d_feat, d_emb),
        b_embed=parts[1],
        w_cls=parts[2].reshape(d_emb, c),
        b_cls=parts[3],
        epoch=int(meta["epoch"]),
    )


def clone_with_epoch(params: ModelParams, epoch: int) -> ModelParams:
    return replace(params, epoch=epoch)

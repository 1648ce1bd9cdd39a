"""Command-line entry points: albalance synth|partition|select|pseudo|train|loop|eval|serve.

Flag defaults can be overridden by a TOML file passed with --config;
the ALBALANCE_SEED environment variable overrides the default seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import io as alio
from .acquisition import normalize_perf, select_batch
from .edges import EdgeConfig
from .harness import RunConfig, Runner, resume_run
from .model import ModelParams, TrainConfig, TrainingSet, fit, load_params, save_params
from .pseudo import PseudoConfig, generate_pseudo, ratio_thresholds
from .raster import LabelMask, MetricReport, confusion_matrix
from .synth import DatasetSpec, default_spec, load_dataset, save_dataset, synth_dataset
from .units import load_units, partition_units, save_units
from .acquisition import balanced_score


def _default_seed() -> int:
    return int(os.environ.get("ALBALANCE_SEED", "0"))


def _apply_config(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        doc = tomllib.loads(Path(args.config).read_text())
        for key, value in doc.items():
            if hasattr(args, key):
                setattr(args, key, value)
    return args


def cmd_synth(args):
    spec = default_spec(num_images=args.images, height=args.size, width=args.size)
    if args.spec:
        spec = DatasetSpec.from_json(json.loads(Path(args.spec).read_text()))
    ds = synth_dataset(args.seed, spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds.image_ids)} images to {args.out}; proportions {np.round(ds.proportions, 4).tolist()}")


def cmd_partition(args):
    img = alio.read_png(args.image)
    cfg = EdgeConfig()
    image_id = Path(args.image).stem
    units = partition_units(
        img, cfg, args.region_size, args.budget_frac, image_id=image_id, use_edges=not args.no_edges
    )
    save_units(args.out, units, {image_id: (img.height, img.width)})
    n_edge = sum(1 for u in units if u.kind == "EDGE")
    print(f"{len(units)} units ({n_edge} edge) -> {args.out}")


def cmd_select(args):
    units, dims = load_units(args.units)
    stats = normalize_perf(np.array(json.loads(Path(args.stats).read_text())["raw_iou"]))
    scores = {}
    for u in units:
        pm = alio.read_probability_map(Path(args.prob_maps) / f"{u.image_id}.alrt")
        scores[u.id] = balanced_score(pm, u, stats, region_size=args.region_size)
    chosen = select_batch(units, scores, args.budget_px, args.strategy.upper(), seed=args.seed)
    Path(args.out).write_text(json.dumps({"chosen": [u.id for u in chosen], "pixels": sum(u.cost for u in chosen)}))
    print(f"selected {len(chosen)} units ({sum(u.cost for u in chosen)} px) -> {args.out}")


def cmd_pseudo(args):
    raw = np.array(json.loads(Path(args.iou).read_text())["raw_iou"])
    thresholds = ratio_thresholds(raw, PseudoConfig(base=args.base))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for pm_path in sorted(Path(args.prob_maps).glob("*.alrt")):
        pm = alio.read_probability_map(pm_path)
        labels = alio.read_label_mask(Path(args.labels) / pm_path.name)
        merged = generate_pseudo(pm, labels, thresholds)
        alio.write_label_mask(out_dir / pm_path.name, merged)
    print(f"thresholds {np.round(thresholds, 4).tolist()} -> {args.out}")


def cmd_train(args):
    ds = load_dataset(args.dataset)
    from .model import extract_features, feature_dim

    pairs = []
    for image_id in ds.image_ids:
        mask_path = Path(args.labels) / f"{image_id}.alrt"
        if mask_path.exists():
            pairs.append((extract_features(ds.images[image_id]), alio.read_label_mask(mask_path)))
    train_set = TrainingSet.from_pairs(pairs)
    params = ModelParams.init(
        feature_dim(ds.images[ds.image_ids[0]].channels), ds.spec.num_classes, seed=args.seed
    )
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed)
    params = fit(params, train_set, np.full(ds.spec.num_classes, 0.5), cfg)
    save_params(args.params, params, seed=args.seed)
    print(f"trained {args.epochs} epochs -> {args.params}")


def cmd_loop(args):
    if args.resume:
        log = resume_run(args.resume)
    else:
        spec = default_spec(num_images=args.images, height=args.size, width=args.size)
        if args.spec:
            spec = DatasetSpec.from_json(json.loads(Path(args.spec).read_text()))
        cfg = RunConfig(
            synth_spec=None if args.dataset else spec,
            dataset_dir=args.dataset,
            synth_seed=args.seed,
            strategy=args.strategy.upper(),
            region_size=args.region_size,
            initial_fraction=args.initial_fraction,
            round_budget_pixels=args.round_budget_px,
            total_budget_fraction=args.total_budget,
            epochs_per_round=args.epochs,
            seed=args.seed,
            edge_units=not args.no_edges,
        )
        log = Runner(cfg, journal_path=args.journal).run()
    log.write_jsonl(args.runlog)
    final = log.final
    print(f"{len(log.records)} iterations, final budget {final.budget_fraction:.3f}, mIoU {final.miou:.4f}")


def cmd_eval(args):
    ds = load_dataset(args.dataset)
    from .model import extract_features, forward

    params = load_params(args.params)
    conf = None
    for image_id in ds.image_ids:
        _, pm = forward(params, extract_features(ds.images[image_id]))
        pred = LabelMask.from_labels(pm.data.argmax(axis=2).astype(np.uint8))
        c = confusion_matrix(pred, ds.truth[image_id], ds.spec.num_classes)
        conf = c if conf is None else conf + c
    report = MetricReport.from_confusion(conf)
    doc = {"miou": report.miou, "mean_f1": report.mean_f1, "per_class_iou": report.per_class_iou.tolist()}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
    print(json.dumps(doc))


def cmd_serve(args):
    from .server import serve

    spec = default_spec(num_images=args.images, height=args.size, width=args.size)
    if args.spec:
        spec = DatasetSpec.from_json(json.loads(Path(args.spec).read_text()))
    cfg = RunConfig(
        synth_spec=None if args.dataset else spec,
        dataset_dir=args.dataset,
        synth_seed=args.seed,
        strategy=args.strategy.upper(),
        region_size=args.region_size,
        initial_fraction=args.initial_fraction,
        round_budget_pixels=args.round_budget_px,
        total_budget_fraction=args.total_budget,
        epochs_per_round=args.epochs,
        seed=args.seed,
        labeler="human",
        edge_units=not args.no_edges,
    )
    serve(cfg, port=args.port, journal_path=args.journal, ui_dir=args.ui)


def _add_loop_flags(p):
    p.add_argument("--dataset", default=None, help="dataset directory (default: synthesize)")
    p.add_argument("--spec", default=None, help="dataset spec JSON (synthetic)")
    p.add_argument("--images", type=int, default=12)
    p.add_argument("--size", type=int, default=80)
    p.add_argument("--strategy", default="balanced", choices=["balanced", "entropy", "random"])
    p.add_argument("--region-size", type=int, default=20)
    p.add_argument("--initial-fraction", type=float, default=0.05)
    p.add_argument("--round-budget-px", type=int, default=1500)
    p.add_argument("--total-budget", type=float, default=0.20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--no-edges", action="store_true")
    p.add_argument("--journal", default=None)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--config", default=None, help="TOML file overriding these flags")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="albalance")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--images", type=int, default=12)
    p.add_argument("--size", type=int, default=80)
    p.add_argument("--spec", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("partition", help="split an image into labeling units")
    p.add_argument("--image", required=True)
    p.add_argument("--region-size", type=int, default=80)
    p.add_argument("--budget-frac", type=float, default=0.0)
    p.add_argument("--no-edges", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("select", help="rank and select units under a pixel budget")
    p.add_argument("--prob-maps", required=True)
    p.add_argument("--units", required=True)
    p.add_argument("--stats", required=True)
    p.add_argument("--strategy", default="balanced", choices=["balanced", "entropy", "random"])
    p.add_argument("--budget-px", type=int, required=True)
    p.add_argument("--region-size", type=int, default=80)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("pseudo", help="generate class-balanced pseudo-labels")
    p.add_argument("--prob-maps", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--iou", required=True)
    p.add_argument("--base", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_pseudo)

    p = sub.add_parser("train", help="fit the toy segmenter on label masks")
    p.add_argument("--dataset", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--seed", type=int, default=_default_seed())
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("loop", help="run the full active-learning loop")
    _add_loop_flags(p)
    p.add_argument("--resume", default=None, help="journal to resume from")
    p.add_argument("--runlog", default="runlog.jsonl")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("eval", help="evaluate saved parameters on a dataset")
    p.add_argument("--params", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the human annotation console")
    _add_loop_flags(p)
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--ui", default=None, help="static frontend directory")
    p.set_defaults(func=cmd_serve)

    args = parser.parse_args(argv)
    args = _apply_config(args)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())

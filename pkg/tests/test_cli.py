import json

import numpy as np
import pytest

from albalance import io as alio
from albalance.cli import main
from albalance.raster import LabelMask
from albalance.synth import load_dataset


def test_synth_writes_dataset(tmp_path):
    out = tmp_path / "ds"
    assert main(["synth", "--seed", "3", "--images", "2", "--size", "48", "--out", str(out)]) == 0
    ds = load_dataset(out)
    assert len(ds.image_ids) == 2
    assert (out / "spec.json").exists()


def test_partition_select_pseudo_pipeline(tmp_path):
    ds_dir = tmp_path / "ds"
    main(["synth", "--seed", "1", "--images", "1", "--size", "64", "--out", str(ds_dir)])

    units_path = tmp_path / "units.json"
    main(
        [
            "partition",
            "--image", str(ds_dir / "img000.png"),
            "--region-size", "16",
            "--budget-frac", "0.0",
            "--out", str(units_path),
        ]
    )
    doc = json.loads(units_path.read_text())
    assert sum(u["cost"] for u in doc["units"]) == 64 * 64

    # uniform probability maps for selection and pseudo-labeling
    pm_dir = tmp_path / "pms"
    pm_dir.mkdir()
    rng = np.random.default_rng(0)
    raw = rng.uniform(0.1, 1.0, size=(64, 64, 6))
    from albalance.raster import ProbabilityMap

    alio.write_probability_map(pm_dir / "img000.alrt", ProbabilityMap(data=raw / raw.sum(axis=2, keepdims=True)))

    stats_path = tmp_path / "stats.json"
    stats_path.write_text(json.dumps({"raw_iou": [0.9, 0.5, 0.3, 0.7, 0.1, 0.6]}))

    chosen_path = tmp_path / "chosen.json"
    main(
        [
            "select",
            "--prob-maps", str(pm_dir),
            "--units", str(units_path),
            "--stats", str(stats_path),
            "--strategy", "balanced",
            "--budget-px", "2000",
            "--region-size", "16",
            "--seed", "7",
            "--out", str(chosen_path),
        ]
    )
    chosen = json.loads(chosen_path.read_text())
    assert 0 < chosen["pixels"] <= 2000

    labels_dir = tmp_path / "labels"
    labels_dir.mkdir()
    alio.write_label_mask(labels_dir / "img000.alrt", LabelMask.empty(64, 64))
    pseudo_dir = tmp_path / "pseudo"
    main(
        [
            "pseudo",
            "--prob-maps", str(pm_dir),
            "--labels", str(labels_dir),
            "--iou", str(stats_path),
            "--base", "0.5",
            "--out", str(pseudo_dir),
        ]
    )
    merged = alio.read_label_mask(pseudo_dir / "img000.alrt")
    assert (merged.provenance == 2).sum() > 0


def test_loop_and_eval_and_resume(tmp_path):
    runlog = tmp_path / "runlog.jsonl"
    journal = tmp_path / "run.journal"
    args = [
        "loop",
        "--images", "4",
        "--size", "48",
        "--region-size", "12",
        "--round-budget-px", "600",
        "--total-budget", "0.12",
        "--epochs", "3",
        "--seed", "2",
        "--journal", str(journal),
        "--runlog", str(runlog),
    ]
    assert main(args) == 0
    lines = [json.loads(l) for l in runlog.read_text().splitlines()]
    assert lines[-1]["budget_fraction"] >= 0.1
    assert journal.exists()

    resumed_log = tmp_path / "resumed.jsonl"
    assert main(["loop", "--resume", str(journal), "--runlog", str(resumed_log)]) == 0
    a = [{k: v for k, v in r.items() if k != "wall_time"} for r in lines]
    b = [
        {k: v for k, v in json.loads(l).items() if k != "wall_time"}
        for l in resumed_log.read_text().splitlines()
    ]
    assert a == b


def test_train_and_eval(tmp_path):
    ds_dir = tmp_path / "ds"
    main(["synth", "--seed", "5", "--images", "2", "--size", "48", "--out", str(ds_dir)])
    labels_dir = tmp_path / "labels"
    labels_dir.mkdir()
    ds = load_dataset(ds_dir)
    for image_id in ds.image_ids:
        alio.write_label_mask(labels_dir / f"{image_id}.alrt", ds.truth[image_id])
    params_path = tmp_path / "params.alrt"
    main(
        [
            "train",
            "--dataset", str(ds_dir),
            "--labels", str(labels_dir),
            "--params", str(params_path),
            "--epochs", "5",
            "--seed", "1",
        ]
    )
    report_path = tmp_path / "report.json"
    main(["eval", "--params", str(params_path), "--dataset", str(ds_dir), "--out", str(report_path)])
    report = json.loads(report_path.read_text())
    assert 0 <= report["miou"] <= 1
    assert len(report["per_class_iou"]) == 6


def test_config_toml_overrides(tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('images = 2\nsize = 48\nseed = 9\n')
    out = tmp_path / "ds"
    main(["synth", "--out", str(out), "--config", str(cfg)])
    ds = load_dataset(out)
    assert len(ds.image_ids) == 2


def test_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("ALBALANCE_SEED", "77")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    main(["synth", "--images", "1", "--size", "48", "--out", str(out_a)])
    main(["synth", "--images", "1", "--size", "48", "--seed", "77", "--out", str(out_b)])
    a = load_dataset(out_a)
    b = load_dataset(out_b)
    assert a.images["img000"].data.tobytes() == b.images["img000"].data.tobytes()

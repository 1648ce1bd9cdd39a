import time

import numpy as np
import pytest

pytest.importorskip("fastapi")
from fastapi.testclient import TestClient

from albalance.harness import RunConfig
from albalance.server import ServeSession, decode_label_runs
from albalance.synth import default_spec


def human_config(**over):
    base = dict(
        synth_spec=default_spec(num_images=4, height=48, width=48),
        synth_seed=2,
        strategy="BALANCED",
        region_size=12,
        initial_fraction=0.05,
        round_budget_pixels=600,
        total_budget_fraction=0.10,
        epochs_per_round=3,
        seed=4,
        labeler="human",
        edge_units=False,
    )
    base.update(over)
    return RunConfig(**base)


@pytest.fixture()
def session():
    s = ServeSession(human_config()).start()
    yield s
    s.labeler.cancel()
    s.thread.join(timeout=10)


def wait_for_queue(client, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        items = client.get("/api/queue").json()
        if items:
            return items
        time.sleep(0.02)
    raise TimeoutError("queue never filled")


def truth_runs(session, unit_id):
    """Ground-truth label runs for a unit, as the UI would submit them."""
    unit = session.runner.units[unit_id]
    truth = session.runner.dataset.truth[unit.image_id]
    classes = truth.labels.ravel()[unit.mask]
    runs = []
    for c in classes:
        if runs and runs[-1][0] == int(c):
            runs[-1][1] += 1
        else:
            runs.append([int(c), 1])
    return runs


class TestDecodeLabelRuns:
    def test_roundtrip(self):
        classes = decode_label_runs([[1, 3], [0, 2]], 5, 3)
        assert classes.tolist() == [1, 1, 1, 0, 0]

    def test_wrong_total_rejected(self):
        with pytest.raises(ValueError, match="cover"):
            decode_label_runs([[1, 3]], 5, 3)

    def test_class_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            decode_label_runs([[7, 5]], 5, 3)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            decode_label_runs([[1, 0]], 0, 3)


class TestHumanLoop:
    def test_queue_round_trip_and_budget(self, session):
        client = TestClient(session.app)
        items = wait_for_queue(client)
        first = items[0]
        assert {"unit_id", "image_id", "kind", "cost", "bbox", "crop"} <= set(first)

        status = client.get("/api/status").json()
        before_px = status["labeled_pixels"]
        assert status["phase"] == "labeling"
        assert status["num_classes"] == 6
        assert len(status["class_names"]) == 6

        resp = client.post(
            "/api/labels", json={"unit_id": first["unit_id"], "rle_labels": truth_runs(session, first["unit_id"])}
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["labeled_pixels"] == before_px + first["cost"]

        remaining = {i["unit_id"] for i in client.get("/api/queue").json()}
        assert first["unit_id"] not in remaining

    def test_unknown_unit_404(self, session):
        client = TestClient(session.app)
        wait_for_queue(client)
        resp = client.post("/api/labels", json={"unit_id": "nope:r0", "rle_labels": [[0, 1]]})
        assert resp.status_code == 404

    def test_not_queued_unit_404(self, session):
        client = TestClient(session.app)
        items = wait_for_queue(client)
        queued = {i["unit_id"] for i in items}
        other = next(uid for uid in session.runner.units if uid not in queued)
        resp = client.post("/api/labels", json={"unit_id": other, "rle_labels": [[0, 1]]})
        assert resp.status_code == 404

    def test_bad_class_code_400_state_unchanged(self, session):
        client = TestClient(session.app)
        items = wait_for_queue(client)
        first = items[0]
        before = client.get("/api/status").json()["labeled_pixels"]
        resp = client.post("/api/labels", json={"unit_id": first["unit_id"], "rle_labels": [[99, first["cost"]]]})
        assert resp.status_code == 400
        assert client.get("/api/status").json()["labeled_pixels"] == before
        assert first["unit_id"] in {i["unit_id"] for i in client.get("/api/queue").json()}

    def test_wrong_coverage_400(self, session):
        client = TestClient(session.app)
        first = wait_for_queue(client)[0]
        resp = client.post("/api/labels", json={"unit_id": first["unit_id"], "rle_labels": [[0, 1]]})
        assert resp.status_code == 400

    def test_unit_image_and_mask_endpoints(self, session):
        client = TestClient(session.app)
        first = wait_for_queue(client)[0]
        img = client.get(f"/api/unit/{first['unit_id']}/image")
        assert img.status_code == 200
        assert img.headers["content-type"] == "image/png"
        assert img.content[:8] == b"\x89PNG\r\n\x1a\n"

        mask = client.get(f"/api/unit/{first['unit_id']}/mask").json()
        assert mask["unit_id"] == first["unit_id"]
        assert sum(mask["rle"][1::2]) == first["cost"]

    def test_skip_advances_queue(self, session):
        client = TestClient(session.app)
        first = wait_for_queue(client)[0]
        resp = client.post("/api/skip", json={"unit_id": first["unit_id"]})
        assert resp.status_code == 200
        assert first["unit_id"] not in {i["unit_id"] for i in client.get("/api/queue").json()}

    def test_full_round_triggers_retrain_and_metrics(self):
        session = ServeSession(human_config(total_budget_fraction=0.06)).start()
        client = TestClient(session.app)
        items = wait_for_queue(client)
        assert client.get("/api/metrics").json()["records"] == []
        for item in items:
            resp = client.post(
                "/api/labels",
                json={"unit_id": item["unit_id"], "rle_labels": truth_runs(session, item["unit_id"])},
            )
            assert resp.status_code == 200
        deadline = time.time() + 60
        while time.time() < deadline:
            records = client.get("/api/metrics").json()["records"]
            if records:
                break
            time.sleep(0.05)
        assert records, "no metrics record after completing the round"
        assert records[0]["iteration"] == 0
        assert 0 < records[0]["miou"] <= 1

"""Human-in-the-loop annotation service.

The AL loop runs in its own thread and blocks at each labeling round
until every queued unit is submitted or skipped through the HTTP API.
Request handlers only validate and enqueue; the loop thread applies
every state mutation, so the run stays single-writer and the journal
captures each submission as a write-ahead record.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import io as alio
from .harness import Runner, RunConfig
from .raster import RasterImage
from .units import LabelingUnit, rle_encode

_CROP_PAD = 16


class LabelSubmission(BaseModel):
    unit_id: str
    rle_labels: list[list[int]]


class SkipRequest(BaseModel):
    unit_id: str


class RunCancelled(Exception):
    """Raised inside the loop thread when the session is shut down."""


class HumanLabeler:
    """Round-blocking labeler fed by the HTTP handlers."""

    def __init__(self):
        self.cond = threading.Condition()
        self.pending: dict[str, LabelingUnit] = {}
        self.submissions: list[tuple[str, np.ndarray]] = []
        self.skipped: set[str] = set()
        self.phase = "starting"
        self.cancelled = False
        self.runner: Runner | None = None

    def __call__(self, units: list[LabelingUnit], runner: Runner) -> dict:
        with self.cond:
            self.runner = runner
            self.pending = {u.id: u for u in units}
            self.skipped = set()
            self.phase = "labeling"
            self.cond.notify_all()
            while self.pending and not self.cancelled:
                while not self.submissions and self.pending and not self.cancelled:
                    self.cond.wait(timeout=0.1)
                while self.submissions:
                    unit_id, classes = self.submissions.pop(0)
                    unit = self.pending.pop(unit_id, None)
                    if unit is not None:
                        runner._apply_labels(unit, classes)
                    self.cond.notify_all()
            if self.cancelled:
                raise RunCancelled
            self.phase = "training"
        return {}

    def cancel(self) -> None:
        with self.cond:
            self.cancelled = True
            self.cond.notify_all()

    def submit(self, unit_id: str, classes: np.ndarray) -> None:
        """Queue a validated submission and wait until the loop applies it."""
        with self.cond:
            if unit_id not in self.pending:
                raise KeyError(unit_id)
            self.submissions.append((unit_id, classes))
            self.cond.notify_all()
            while any(s[0] == unit_id for s in self.submissions) or unit_id in self.pending:
                if not self.cond.wait(timeout=5.0):
                    raise TimeoutError("loop thread did not drain the submission")

    def skip(self, unit_id: str) -> None:
        with self.cond:
            if unit_id not in self.pending:
                raise KeyError(unit_id)
            del self.pending[unit_id]
            self.skipped.add(unit_id)
            self.cond.notify_all()


def decode_label_runs(rle_labels: list[list[int]], expected: int, num_classes: int) -> np.ndarray:
    """[[class, count], ...] covering a unit's mask pixels in row-major order."""
    out = []
    for pair in rle_labels:
        if len(pair) != 2:
            raise ValueError("each run must be a [class, count] pair")
        cls, count = pair
        if count <= 0:
            raise ValueError("run counts must be positive")
        if not 0 <= cls < num_classes:
            raise ValueError(f"class code {cls} out of range")
        out.append(np.full(count, cls, dtype=np.uint8))
    classes = np.concatenate(out) if out else np.empty(0, dtype=np.uint8)
    if classes.size != expected:
        raise ValueError(f"runs cover {classes.size} pixels, unit has {expected}")
    return classes


def build_app(runner: Runner, labeler: HumanLabeler, ui_dir=None) -> FastAPI:
    app = FastAPI(title="albalance annotation console")
    spec = runner.dataset.spec

    def _unit_or_404(unit_id: str) -> LabelingUnit:
        unit = runner.units.get(unit_id)
        if unit is None:
            raise HTTPException(status_code=404, detail=f"unknown unit {unit_id}")
        return unit

    def _crop_box(unit: LabelingUnit) -> tuple[int, int, int, int]:
        img = runner.dataset.images[unit.image_id]
        r0, c0, r1, c1 = unit.bbox(img.width)
        return (
            max(0, r0 - _CROP_PAD),
            max(0, c0 - _CROP_PAD),
            min(img.height, r1 + _CROP_PAD),
            min(img.width, c1 + _CROP_PAD),
        )

    @app.get("/api/queue")
    def queue():
        with labeler.cond:
            items = []
            for unit in labeler.pending.values():
                img = runner.dataset.images[unit.image_id]
                items.append(
                    {
                        "unit_id": unit.id,
                        "image_id": unit.image_id,
                        "kind": unit.kind,
                        "cost": unit.cost,
                        "bbox": list(unit.bbox(img.width)),
                        "crop": list(_crop_box(unit)),
                        "image_height": img.height,
                        "image_width": img.width,
                    }
                )
        return JSONResponse(items)

    @app.get("/api/unit/{unit_id}/image")
    def unit_image(unit_id: str):
        unit = _unit_or_404(unit_id)
        img = runner.dataset.images[unit.image_id]
        r0, c0, r1, c1 = _crop_box(unit)
        crop = RasterImage(data=np.ascontiguousarray(img.data[r0:r1, c0:c1]))
        return Response(content=alio.png_bytes(crop), media_type="image/png")

    @app.get("/api/unit/{unit_id}/mask")
    def unit_mask(unit_id: str):
        unit = _unit_or_404(unit_id)
        img = runner.dataset.images[unit.image_id]
        return JSONResponse(
            {
                "unit_id": unit.id,
                "height": img.height,
                "width": img.width,
                "rle": rle_encode(unit.mask, img.height * img.width),
                "bbox": list(unit.bbox(img.width)),
                "crop": list(_crop_box(unit)),
            }
        )

    @app.post("/api/labels")
    def post_labels(sub: LabelSubmission):
        unit = _unit_or_404(sub.unit_id)
        with labeler.cond:
            if sub.unit_id not in labeler.pending:
                raise HTTPException(status_code=404, detail=f"unit {sub.unit_id} is not queued")
        try:
            classes = decode_label_runs(sub.rle_labels, unit.cost, spec.num_classes)
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        try:
            labeler.submit(sub.unit_id, classes)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unit {sub.unit_id} is not queued")
        return {
            "unit_id": sub.unit_id,
            "labeled_pixels": runner.labeled_pixels,
            "budget_fraction": runner.budget_fraction,
        }

    @app.post("/api/skip")
    def post_skip(req: SkipRequest):
        try:
            labeler.skip(req.unit_id)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unit {req.unit_id} is not queued")
        return {"unit_id": req.unit_id, "skipped": True}

    @app.get("/api/metrics")
    def metrics():
        return JSONResponse({"records": [r.to_json() for r in runner.log.records]})

    @app.get("/api/status")
    def status():
        with labeler.cond:
            pending = len(labeler.pending)
            phase = labeler.phase
        return {
            "phase": phase,
            "iteration": runner.iteration,
            "pending": pending,
            "labeled_pixels": runner.labeled_pixels,
            "total_pixels": runner.total_pool_pixels,
            "budget_fraction": runner.budget_fraction,
            "num_classes": spec.num_classes,
            "class_names": [c.name for c in spec.classes],
            "palette": [list(c.color) for c in spec.classes],
        }

    if ui_dir and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


class ServeSession:
    """Bundles a runner, its labeler, the app, and the loop thread."""

    def __init__(self, cfg: RunConfig, journal_path=None, ui_dir=None):
        self.labeler = HumanLabeler()
        self.runner = Runner(cfg, labeler=self.labeler, journal_path=journal_path)
        self.app = build_app(self.runner, self.labeler, ui_dir=ui_dir)
        self.thread = threading.Thread(target=self._run, daemon=True)

    def _run(self):
        try:
            self.runner.run()
        except RunCancelled:
            return
        with self.labeler.cond:
            self.labeler.phase = "done"
            self.labeler.cond.notify_all()

    def start(self) -> "ServeSession":
        self.thread.start()
        return self


def serve(cfg: RunConfig, port: int = 8008, journal_path=None, ui_dir=None) -> None:
    """Blocking entry point: run the loop and serve the console."""
    import uvicorn

    session = ServeSession(cfg, journal_path=journal_path, ui_dir=ui_dir).start()
    uvicorn.run(session.app, host="127.0.0.1", port=port, log_level="warning")

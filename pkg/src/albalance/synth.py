"""Synthetic raster scenes: Voronoi mosaics with controlled class areas.

Cells are assigned to classes by a running-deficit greedy so that the
aggregate class-area proportions track the spec targets; per-class
styles control base color, texture noise, and shape family ("cell"
polygons or stamped "blob" ellipses).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as alio
from .raster import LabelMask, RasterImage

SHAPE_CELL = "cell"
SHAPE_BLOB = "blob"

# blob classes skip an image rather than stamp a speck: the accumulated
# deficit must reach this fraction of the image (or 64 px) first
_BLOB_MIN_FRACTION = 0.07


@dataclass(frozen=True)
class ClassStyle:
    name: str
    color: tuple[int, int, int]
    noise: float = 8.0
    jitter: float = 0.0  # per-cell color shift, makes classes multimodal
    shape: str = SHAPE_CELL


@dataclass(frozen=True)
class DatasetSpec:
    classes: tuple[ClassStyle, ...]
    proportions: tuple[float, ...]
    num_images: int = 8
    height: int = 128
    width: int = 128
    cells_min: int = 10
    cells_max: int = 16

    def __post_init__(self):
        if len(self.classes) != len(self.proportions):
            raise ValueError("one proportion per class style required")
        if abs(sum(self.proportions) - 1.0) > 1e-6:
            raise ValueError(f"proportions must sum to 1, got {sum(self.proportions)}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def to_json(self) -> dict:
        return {
            "classes": [
                {
                    "name": c.name,
                    "color": list(c.color),
                    "noise": c.noise,
                    "jitter": c.jitter,
                    "shape": c.shape,
                }
                for c in self.classes
            ],
            "proportions": list(self.proportions),
            "num_images": self.num_images,
            "height": self.height,
            "width": self.width,
            "cells_min": self.cells_min,
            "cells_max": self.cells_max,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "DatasetSpec":
        return cls(
            classes=tuple(
                ClassStyle(
                    name=c["name"],
                    color=tuple(c["color"]),
                    noise=c["noise"],
                    jitter=c.get("jitter", 0.0),
                    shape=c.get("shape", SHAPE_CELL),
                )
                for c in doc["classes"]
            ),
            proportions=tuple(doc["proportions"]),
            num_images=doc["num_images"],
            height=doc["height"],
            width=doc["width"],
            cells_min=doc["cells_min"],
            cells_max=doc["cells_max"],
        )


def _normalized(raw: tuple[float, ...]) -> tuple[float, ...]:
    s = sum(raw)
    return tuple(v / s for v in raw)


def default_spec(num_images: int = 12, height: int = 80, width: int = 80) -> DatasetSpec:
    """Deepglobe-like imbalance: dominant class near 58%, rarest near 4%.

    Styles are chosen so that the rare classes neighbor a frequent class
    in feature space (water vs forest, barren vs urban, rangeland vs
    agriculture): a model that never saw the rare class is confidently
    wrong about it, reproducing the starvation dynamics that balanced
    acquisition is meant to break.
    """
    return DatasetSpec(
        classes=(
            ClassStyle("urban", (126, 124, 128), noise=24.0, jitter=10.0),
            ClassStyle("agriculture", (178, 196, 88), noise=6.0, jitter=8.0),
            ClassStyle("rangeland", (168, 190, 96), noise=18.0, jitter=10.0),
            ClassStyle("forest", (48, 92, 54), noise=9.0, jitter=8.0),
            ClassStyle("water", (44, 86, 82), noise=5.0, jitter=6.0),
            ClassStyle("barren", (138, 126, 106), noise=15.0, jitter=10.0),
        ),
        proportions=_normalized((0.093, 0.577, 0.102, 0.138, 0.037, 0.061)),
        num_images=num_images,
        height=height,
        width=width,
        cells_min=8,
        cells_max=12,
    )


def edge_benchmark_spec(num_images: int = 20, height: int = 128, width: int = 128) -> DatasetSpec:
    """High-contrast scenes for exercising the edge-unit pipeline."""
    return DatasetSpec(
        classes=(
            ClassStyle("dark", (25, 25, 25), noise=3.0),
            ClassStyle("dim", (102, 102, 102), noise=3.0),
            ClassStyle("bright", (178, 178, 178), noise=3.0),
            ClassStyle("light", (250, 250, 250), noise=3.0),
        ),
        proportions=(0.25, 0.25, 0.25, 0.25),
        num_images=num_images,
        height=height,
        width=width,
        cells_min=6,
        cells_max=9,
    )


@dataclass
class SynthDataset:
    spec: DatasetSpec
    image_ids: list[str]
    images: dict[str, RasterImage]
    truth: dict[str, LabelMask]
    proportions: np.ndarray = field(default=None)

    @property
    def total_pixels(self) -> int:
        return sum(img.height * img.width for img in self.images.values())


def _voronoi_classes(
    rng: np.random.Generator, spec: DatasetSpec, deficit: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One mosaic's class map and cell map, greedily tracking the area deficit."""
    h, w = spec.height, spec.width
    n_cells = int(rng.integers(spec.cells_min, spec.cells_max + 1))
    sites = rng.uniform(0, [h, w], size=(n_cells, 2))
    rows, cols = np.mgrid[0:h, 0:w]
    d2 = (rows[..., None] - sites[:, 0]) ** 2 + (cols[..., None] - sites[:, 1]) ** 2
    cell_of = d2.argmin(axis=2)

    areas = np.bincount(cell_of.ravel(), minlength=n_cells)
    cell_class = np.zeros(n_cells, dtype=np.int64)
    remaining = deficit.copy()
    for cell in np.argsort(-areas, kind="stable"):
        c = int(np.argmax(remaining))
        cell_class[cell] = c
        remaining[c] -= areas[cell]
    classes = cell_class[cell_of]

    for c, style in enumerate(spec.classes):
        if style.shape != SHAPE_BLOB:
            continue
        target_area = max(float(remaining[c] + (classes == c).sum()), 0.0)
        classes[classes == c] = int(np.argmax(remaining))  # blob classes vacate their cells
        if target_area < max(64.0, _BLOB_MIN_FRACTION * h * w):
            continue  # deficit carries over: rarer but larger blobs
        radius = np.sqrt(target_area / np.pi)
        ry = max(radius * rng.uniform(0.7, 1.3), 2.0)
        rx = max(target_area / (np.pi * ry), 2.0)
        cy, cx = rng.uniform(ry, h - ry), rng.uniform(rx, w - rx)
        ellipse = ((rows - cy) / ry) ** 2 + ((cols - cx) / rx) ** 2 <= 1.0
        classes[ellipse] = c
    return classes, cell_of


def _render(
    rng: np.random.Generator, spec: DatasetSpec, classes: np.ndarray, cell_of: np.ndarray
) -> RasterImage:
    colors = np.array([list(s.color) for s in spec.classes], dtype=np.float64)
    noises = np.array([s.noise for s in spec.classes])
    jitters = np.array([s.jitter for s in spec.classes])
    n_cells = int(cell_of.max()) + 1
    cell_shift = rng.standard_normal((n_cells, 3))
    out = colors[classes]
    out += cell_shift[cell_of] * jitters[classes][:, :, None]
    out += rng.standard_normal(out.shape) * noises[classes][:, :, None]
    return RasterImage(data=np.clip(out, 0, 255).astype(np.uint8))


def synth_dataset(seed: int, spec: DatasetSpec) -> SynthDataset:
    """Deterministic dataset whose aggregate class areas track the targets."""
    targets = np.asarray(spec.proportions, dtype=np.float64)
    img_px = spec.height * spec.width
    realized = np.zeros(spec.num_classes, dtype=np.float64)
    images: dict[str, RasterImage] = {}
    truth: dict[str, LabelMask] = {}
    ids = []
    for i in range(spec.num_images):
        rng = np.random.default_rng([seed, i])
        deficit = targets * img_px * (i + 1) - realized
        classes, cell_of = _voronoi_classes(rng, spec, deficit)
        realized += np.bincount(classes.ravel(), minlength=spec.num_classes)
        image_id = f"img{i:03d}"
        ids.append(image_id)
        images[image_id] = _render(rng, spec, classes, cell_of)
        truth[image_id] = LabelMask.from_labels(classes.astype(np.uint8))
    return SynthDataset(
        spec=spec,
        image_ids=ids,
        images=images,
        truth=truth,
        proportions=realized / realized.sum(),
    )


def save_dataset(ds: SynthDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "spec.json").write_text(json.dumps(ds.spec.to_json(), indent=2))
    for image_id in ds.image_ids:
        alio.write_png(directory / f"{image_id}.png", ds.images[image_id])
        alio.write_label_mask(directory / f"{image_id}.truth.alrt", ds.truth[image_id])


def load_dataset(directory) -> SynthDataset:
    directory = Path(directory)
    spec = DatasetSpec.from_json(json.loads((directory / "spec.json").read_text()))
    images, truth, ids = {}, {}, []
    for png in sorted(directory.glob("*.png")):
        image_id = png.stem
        ids.append(image_id)
        images[image_id] = alio.read_png(png)
        truth[image_id] = alio.read_label_mask(directory / f"{image_id}.truth.alrt")
    if not ids:
        raise FileNotFoundError(f"no images under {directory}")
    counts = np.zeros(spec.num_classes)
    for image_id in ids:
        counts += np.bincount(truth[image_id].labels.ravel(), minlength=spec.num_classes)[: spec.num_classes]
    return SynthDataset(spec=spec, image_ids=ids, images=images, truth=truth, proportions=counts / counts.sum())

"""Labeling units: grid cells, edge-guided components, RLE serialization.

A unit's mask is a sorted array of flat row-major pixel indices; the
units of one image always form a disjoint cover of its pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .edges import EdgeConfig, edge_mask
from .raster import RasterImage

KIND_RECT = "RECT"
KIND_EDGE = "EDGE"

_CONN8 = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class LabelingUnit:
    id: str
    image_id: str
    kind: str
    mask: np.ndarray  # sorted flat indices, int64

    def __post_init__(self):
        if self.mask.size == 0:
            raise ValueError("unit mask must be non-empty")

    @property
    def cost(self) -> int:
        return int(self.mask.size)

    def bbox(self, width: int) -> tuple[int, int, int, int]:
        """(row0, col0, row1, col1) inclusive-exclusive bounding box."""
        rows, cols = np.divmod(self.mask, width)
        return int(rows.min()), int(cols.min()), int(rows.max()) + 1, int(cols.max()) + 1


def rle_encode(mask: np.ndarray, npx: int) -> list[int]:
    """Alternating skip/take run lengths over the flat row-major grid."""
    mask = np.asarray(mask, dtype=np.int64)
    runs: list[int] = []
    pos = 0
    i = 0
    n = mask.size
    while i < n:
        start = mask[i]
        j = i + 1
        while j < n and mask[j] == mask[j - 1] + 1:
            j += 1
        runs.append(int(start - pos))
        runs.append(int(j - i))
        pos = int(mask[j - 1]) + 1
        i = j
    if pos > npx:
        raise ValueError("mask index beyond grid size")
    return runs


def rle_decode(runs: list[int], npx: int) -> np.ndarray:
    if len(runs) % 2 != 0:
        raise ValueError("RLE must alternate skip/take pairs")
    out = []
    pos = 0
    for skip, take in zip(runs[::2], runs[1::2]):
        if skip < 0 or take <= 0:
            raise ValueError("RLE counts must be non-negative skips and positive takes")
        pos += skip
        out.append(np.arange(pos, pos + take, dtype=np.int64))
        pos += take
    if pos > npx:
        raise ValueError("RLE runs past the end of the grid")
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


def grid_units(img_dims: tuple[int, int], region_size: int, image_id: str = "img") -> list[LabelingUnit]:
    """Non-overlapping tiling; right/bottom remainders become smaller cells."""
    if region_size < 8:
        raise ValueError("region_size must be >= 8")
    h, w = img_dims
    units = []
    k = 0
    for r0 in range(0, h, region_size):
        for c0 in range(0, w, region_size):
            r1, c1 = min(r0 + region_size, h), min(c0 + region_size, w)
            rows = np.arange(r0, r1, dtype=np.int64)
            cols = np.arange(c0, c1, dtype=np.int64)
            flat = (rows[:, None] * w + cols[None, :]).ravel()
            units.append(LabelingUnit(id=f"{image_id}:r{k}", image_id=image_id, kind=KIND_RECT, mask=flat))
            k += 1
    return units


def _split_oversized(flat: np.ndarray, width: int, region_size: int, max_pixels: int) -> list[np.ndarray]:
    """Split a component along rectangular grid lines if it is too big.

    The splitting grid pitch never exceeds sqrt(max_pixels), so every
    piece is guaranteed to respect the pixel cap.
    """
    if flat.size <= max_pixels:
        return [flat]
    pitch = max(1, min(region_size, int(np.sqrt(max_pixels))))
    rows, cols = np.divmod(flat, width)
    cell = (rows // pitch) * ((width + pitch - 1) // pitch) + cols // pitch
    order = np.argsort(cell, kind="stable")
    flat, cell = flat[order], cell[order]
    pieces = np.split(flat, np.nonzero(np.diff(cell))[0] + 1)
    return [np.sort(p) for p in pieces]


def partition_units(
    img: RasterImage,
    cfg: EdgeConfig,
    region_size: int,
    budget_fraction: float,
    image_id: str = "img",
    use_edges: bool = True,
) -> list[LabelingUnit]:
    """Disjoint cover of the image by EDGE components and residual RECT cells."""
    h, w = img.height, img.width
    edge_flat = np.empty(0, dtype=np.int64)
    units: list[LabelingUnit] = []
    if use_edges:
        em = edge_mask(img, cfg, budget_fraction)
        if em.any():
            labels, n = ndimage.label(em, structure=_CONN8)
            flat_labels = labels.ravel()
            order = np.argsort(flat_labels, kind="stable")
            boundaries = np.searchsorted(flat_labels[order], np.arange(1, n + 2))
            k = 0
            for comp in range(n):
                comp_flat = np.sort(order[boundaries[comp] : boundaries[comp + 1]])
                for piece in _split_oversized(comp_flat, w, region_size, cfg.max_unit_pixels):
                    units.append(
                        LabelingUnit(id=f"{image_id}:e{k}", image_id=image_id, kind=KIND_EDGE, mask=piece)
                    )
                    k += 1
            edge_flat = np.sort(np.nonzero(em.ravel())[0])

    edge_set = np.zeros(h * w, dtype=bool)
    edge_set[edge_flat] = True
    for cell in grid_units((h, w), region_size, image_id):
        residual = cell.mask[~edge_set[cell.mask]]
        if residual.size:
            units.append(LabelingUnit(id=cell.id, image_id=image_id, kind=KIND_RECT, mask=residual))
    return units


def units_to_json(units: list[LabelingUnit], dims: dict[str, tuple[int, int]]) -> dict:
    return {
        "images": {img: {"height": int(h), "width": int(w)} for img, (h, w) in dims.items()},
        "units": [
            {
                "id": u.id,
                "image_id": u.image_id,
                "kind": u.kind,
                "rle_mask": rle_encode(u.mask, dims[u.image_id][0] * dims[u.image_id][1]),
                "cost": u.cost,
            }
            for u in units
        ],
    }


def units_from_json(doc: dict) -> tuple[list[LabelingUnit], dict[str, tuple[int, int]]]:
    dims = {k: (int(v["height"]), int(v["width"])) for k, v in doc["images"].items()}
    units = []
    for rec in doc["units"]:
        h, w = dims[rec["image_id"]]
        mask = rle_decode(rec["rle_mask"], h * w)
        if mask.size != rec["cost"]:
            raise ValueError(f"unit {rec['id']}: cost {rec['cost']} != mask size {mask.size}")
        units.append(LabelingUnit(id=rec["id"], image_id=rec["image_id"], kind=rec["kind"], mask=mask))
    return units, dims


def save_units(path, units: list[LabelingUnit], dims: dict[str, tuple[int, int]]) -> None:
    Path(path).write_text(json.dumps(units_to_json(units, dims)))


def load_units(path) -> tuple[list[LabelingUnit], dict[str, tuple[int, int]]]:
    return units_from_json(json.loads(Path(path).read_text()))

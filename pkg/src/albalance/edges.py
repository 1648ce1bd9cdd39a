"""Edge-region extraction: Gaussian smoothing, Canny, dilation, schedule.

The high hysteresis threshold follows a budget schedule: it starts at
`canny_high` and drops by `high_decrement` for every 5% of labeled budget
beyond the initial 5% allocation, never going below `canny_low + 1`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .raster import RasterImage, RasterError

SCHEDULE_STEP = 0.05


@dataclass(frozen=True)
class EdgeConfig:
    gaussian_kernel: int = 17
    canny_low: float = 10.0
    canny_high: float = 80.0
    dilation_kernel: int = 9
    high_decrement: float = 5.0
    max_unit_pixels: int = 6400

    def __post_init__(self):
        if self.canny_low >= self.canny_high:
            raise ValueError("canny_low must be below canny_high")
        for k in (self.gaussian_kernel, self.dilation_kernel):
            if k < 3 or k % 2 == 0:
                raise ValueError("kernels must be odd and >= 3")


def gaussian_sigma(kernel: int) -> float:
    """Sigma derived from kernel size: 0.3 * ((k - 1) / 2 - 1) + 0.8."""
    return 0.3 * ((kernel - 1) / 2.0 - 1.0) + 0.8


def _gaussian_kernel_1d(kernel: int) -> np.ndarray:
    sigma = gaussian_sigma(kernel)
    x = np.arange(kernel, dtype=np.float64) - (kernel - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_smooth(gray: np.ndarray, kernel: int) -> np.ndarray:
    g = _gaussian_kernel_1d(kernel)
    out = ndimage.correlate1d(gray, g, axis=0, mode="nearest")
    return ndimage.correlate1d(out, g, axis=1, mode="nearest")


_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = np.array([[-1, -2, -1], [0, 0, 0], [1, 2, 1]], dtype=np.float64)


def sobel_gradients(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = ndimage.correlate(gray, _SOBEL_X, mode="nearest")
    gy = ndimage.correlate(gray, _SOBEL_Y, mode="nearest")
    return gx, gy


def _non_max_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Thin ridges: keep pixels not dominated along the gradient direction.

    Angles quantize to 4 sectors (0, 45, 90, 135 degrees); out-of-image
    neighbors count as zero magnitude.
    """
    h, w = mag.shape
    padded = np.zeros((h + 2, w + 2), dtype=mag.dtype)
    padded[1:-1, 1:-1] = mag

    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    sector = np.zeros(mag.shape, dtype=np.int8)
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3

    # neighbor offsets per sector, along the gradient direction
    offs = {0: ((0, 1), (0, -1)), 1: ((1, 1), (-1, -1)), 2: ((1, 0), (-1, 0)), 3: ((1, -1), (-1, 1))}
    keep = np.zeros(mag.shape, dtype=bool)
    for s, ((di1, dj1), (di2, dj2)) in offs.items():
        n1 = padded[1 + di1 : 1 + di1 + h, 1 + dj1 : 1 + dj1 + w]
        n2 = padded[1 + di2 : 1 + di2 + h, 1 + dj2 : 1 + dj2 + w]
        sel = sector == s
        keep[sel] = (mag[sel] >= n1[sel]) & (mag[sel] >= n2[sel])
    return np.where(keep, mag, 0.0)


_CONN8 = np.ones((3, 3), dtype=bool)


def _hysteresis(nms: np.ndarray, low: float, high: float) -> np.ndarray:
    weak = nms >= low
    strong = nms >= high
    if not strong.any():
        return np.zeros_like(weak)
    labels, n = ndimage.label(weak, structure=_CONN8)
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[strong])] = True
    seeded[0] = False
    return seeded[labels]


def canny(gray: np.ndarray, cfg: EdgeConfig, high: float | None = None) -> np.ndarray:
    """Boolean edge map of a float64 grayscale image."""
    if high is None:
        high = cfg.canny_high
    smoothed = gaussian_smooth(gray, cfg.gaussian_kernel)
    gx, gy = sobel_gradients(smoothed)
    mag = np.hypot(gx, gy)
    nms = _non_max_suppression(mag, gx, gy)
    return _hysteresis(nms, cfg.canny_low, high)


def schedule_high_threshold(cfg: EdgeConfig, budget_fraction: float) -> float:
    """High threshold after the budget-driven decrements.

    Steps count full 5% increments of labeled budget beyond the initial
    5% allocation, so the first post-initialization round still uses the
    configured starting threshold.
    """
    if budget_fraction < 0:
        raise ValueError("budget_fraction must be non-negative")
    steps = max(0, int(np.floor(budget_fraction / SCHEDULE_STEP + 1e-9)) - 1)
    return max(cfg.canny_low + 1.0, cfg.canny_high - cfg.high_decrement * steps)


def edge_mask(img: RasterImage, cfg: EdgeConfig, budget_fraction: float) -> np.ndarray:
    """Dilated Canny edges as a boolean (H, W) mask."""
    if not 0.0 <= budget_fraction <= 1.0:
        raise ValueError("budget_fraction must lie in [0, 1]")
    if min(img.height, img.width) < cfg.gaussian_kernel:
        raise RasterError("image smaller than the smoothing kernel")
    edges = canny(img.luma(), cfg, high=schedule_high_threshold(cfg, budget_fraction))
    if not edges.any():
        return edges
    selem = np.ones((cfg.dilation_kernel, cfg.dilation_kernel), dtype=bool)
    return ndimage.binary_dilation(edges, structure=selem)

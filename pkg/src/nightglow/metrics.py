"""Blind contrast metrics (visible-edge gain e, gradient-ratio r, saturation
sigma) plus reference PSNR for synthetic scenes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import DimensionError, ParameterError, PixelGrid, luminance


@dataclass(frozen=True)
class EdgeConfig:
    """Visible-edge definition: Sobel magnitude on the max-channel luminance,
    scaled so a unit step responds with 1, thresholded at a fraction of the
    dynamic range."""

    visibility_threshold: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.visibility_threshold < 1.0:
            raise ParameterError(
                f"visibility_threshold must lie in (0, 1), got {self.visibility_threshold}")


@dataclass(frozen=True)
class MetricValue:
    """A metric result; `flag` marks degenerate cases (see each metric)."""

    value: float
    flag: str | None = None

    def __float__(self) -> float:
        return self.value


def _check_same_shape(a: PixelGrid, b: PixelGrid) -> None:
    if a.data.shape[:2] != b.data.shape[:2]:
        raise DimensionError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")


def gradient_magnitude(image: PixelGrid) -> np.ndarray:
    """Sobel gradient magnitude of the max-channel luminance; a unit step
    edge responds with magnitude 1."""
    lum = luminance(image).data[:, :, 0].astype(np.float64)
    # "mirror" matches the reflect padding used everywhere else (edge pixel
    # not duplicated)
    gx = ndimage.sobel(lum, axis=1, mode="mirror") / 4.0
    gy = ndimage.sobel(lum, axis=0, mode="mirror") / 4.0
    return np.sqrt(gx ** 2 + gy ** 2)


def visible_edges(image: PixelGrid, cfg: EdgeConfig = EdgeConfig()) -> np.ndarray:
    return gradient_magnitude(image) >= cfg.visibility_threshold


def metric_e(before: PixelGrid, after: PixelGrid, cfg: EdgeConfig = EdgeConfig()) -> MetricValue:
    """Relative gain in visible-edge pixel count, (n_after - n_before)/n_before.

    With no visible edges in `before`, returns the absolute after-count with
    flag "no_edges_before".
    """
    _check_same_shape(before, after)
    n_before = int(visible_edges(before, cfg).sum())
    n_after = int(visible_edges(after, cfg).sum())
    if n_before == 0:
        return MetricValue(float(n_after), flag="no_edges_before")
    return MetricValue((n_after - n_before) / n_before)


def metric_r(before: PixelGrid, after: PixelGrid, cfg: EdgeConfig = EdgeConfig()) -> MetricValue:
    """Geometric mean of after/before gradient ratios over pixels that are
    visible edges in `after`; before-gradients are floored at 1/255.

    With no visible edges in `after`, the ratio is undefined: returns NaN with
    flag "no_edges_after".
    """
    _check_same_shape(before, after)
    g_before = gradient_magnitude(before)
    g_after = gradient_magnitude(after)
    edges = g_after >= cfg.visibility_threshold
    if not edges.any():
        return MetricValue(math.nan, flag="no_edges_after")
    ratios = g_after[edges] / np.maximum(g_before[edges], 1.0 / 255.0)
    return MetricValue(float(np.exp(np.mean(np.log(ratios)))))


def _saturated(image: PixelGrid) -> np.ndarray:
    codes = np.rint(image.data.astype(np.float64) * 255.0)
    return ((codes == 0.0) | (codes == 255.0)).all(axis=2)


def metric_sigma(before: PixelGrid, after: PixelGrid) -> MetricValue:
    """Percentage of pixels saturated (0 or 255 after 8-bit quantization) in
    `after` but not in `before`."""
    _check_same_shape(before, after)
    new_sat = _saturated(after) & ~_saturated(before)
    return MetricValue(100.0 * float(new_sat.mean()))


def psnr(x: PixelGrid, reference: PixelGrid) -> MetricValue:
    """Peak signal-to-noise ratio in dB with peak 1.0; identical inputs give
    +inf with flag "identical"."""
    _check_same_shape(x, reference)
    mse = float(np.mean((x.data.astype(np.float64) - reference.data.astype(np.float64)) ** 2))
    if mse == 0.0:
        return MetricValue(math.inf, flag="identical")
    return MetricValue(10.0 * math.log10(1.0 / mse))

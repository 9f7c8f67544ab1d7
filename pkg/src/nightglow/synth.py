"""Forward synthesis: rasterize light sources, render their glow through an
APSF kernel, and compose verifiable degraded scenes with stored ground truth."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .apsf import ScatterParams, apsf_analytic
from .grids import BinaryMask, DimensionError, Kernel2D, ParameterError, PixelGrid, convolve_same
from .imageio import load_kernel, load_mask_png, load_png, save_kernel, save_mask_png, save_png

SOURCE_SHAPES = ("disc", "rectangle", "polyline", "point-cluster")


class SourceError(ValueError):
    """A source element is malformed or falls outside the image bounds."""


@dataclass(frozen=True)
class SourceElement:
    """One light-source element.

    `position` is the (row, col) anchor; `size` is the disc radius, the
    rectangle half-side, the polyline stroke half-thickness, or the
    point-cluster spread radius. Polylines list their vertices in `points`
    (position is ignored); point clusters scatter `count` unit pixels within
    `size` of the anchor using the scene RNG.
    """

    shape: str
    position: tuple[float, float] = (0.0, 0.0)
    size: float = 1.0
    intensity: float = 1.0
    points: tuple[tuple[float, float], ...] | None = None
    count: int = 8

    def __post_init__(self):
        if self.shape not in SOURCE_SHAPES:
            raise SourceError(f"unknown source shape {self.shape!r}, expected one of {SOURCE_SHAPES}")
        if not 0.0 < self.intensity <= 1.0:
            raise SourceError(f"intensity must lie in (0, 1], got {self.intensity}")
        if self.size < 0:
            raise SourceError(f"size must be >= 0, got {self.size}")
        if self.shape == "polyline" and (self.points is None or len(self.points) < 2):
            raise SourceError("polyline needs at least two points")


@dataclass(frozen=True)
class SourceSpec:
    elements: tuple[SourceElement, ...]

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        if not self.elements:
            raise SourceError("source spec needs at least one element")


@dataclass(frozen=True)
class SyntheticScene:
    """A degraded frame with every ground-truth part needed to reproduce it:
    degraded = clamp(clean_direct + convolve_same(source_map, kernel))."""

    degraded: PixelGrid
    clean_direct: PixelGrid
    source_map: PixelGrid
    kernel: Kernel2D
    mask: BinaryMask
    meta: dict = field(compare=False)


def _segment_distance(yy, xx, a, b):
    ay, ax = a
    by, bx = b
    vy, vx = by - ay, bx - ax
    norm2 = vy * vy + vx * vx
    if norm2 == 0:
        return np.sqrt((yy - ay) ** 2 + (xx - ax) ** 2)
    t = np.clip(((yy - ay) * vy + (xx - ax) * vx) / norm2, 0.0, 1.0)
    return np.sqrt((yy - ay - t * vy) ** 2 + (xx - ax - t * vx) ** 2)


def _check_inside(points, h, w, margin):
    for py, px in points:
        if not (margin <= py <= h - 1 - margin and margin <= px <= w - 1 - margin):
            raise SourceError(
                f"source footprint at ({py}, {px}) with extent {margin} leaves the "
                f"{h}x{w} image bounds")


def rasterize_sources(spec: SourceSpec, height: int, width: int,
                      rng: np.random.Generator) -> PixelGrid:
    """Rasterize source elements to a 3-channel intensity map; overlapping
    elements keep the brighter value."""
    out = np.zeros((height, width), dtype=np.float64)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    for el in spec.elements:
        if el.shape == "disc":
            _check_inside([el.position], height, width, el.size)
            py, px = el.position
            hit = (yy - py) ** 2 + (xx - px) ** 2 <= el.size ** 2
        elif el.shape == "rectangle":
            _check_inside([el.position], height, width, el.size)
            py, px = el.position
            hit = (np.abs(yy - py) <= el.size) & (np.abs(xx - px) <= el.size)
        elif el.shape == "polyline":
            _check_inside(el.points, height, width, el.size)
            dist = np.full((height, width), np.inf)
            for a, b in zip(el.points[:-1], el.points[1:]):
                dist = np.minimum(dist, _segment_distance(yy, xx, a, b))
            hit = dist <= el.size
        else:  # point-cluster
            _check_inside([el.position], height, width, el.size)
            py, px = el.position
            hit = np.zeros((height, width), dtype=bool)
            angles = rng.uniform(0.0, 2.0 * np.pi, size=el.count)
            radii = el.size * np.sqrt(rng.uniform(0.0, 1.0, size=el.count))
            rows = np.clip(np.rint(py + radii * np.sin(angles)), 0, height - 1).astype(int)
            cols = np.clip(np.rint(px + radii * np.cos(angles)), 0, width - 1).astype(int)
            hit[rows, cols] = True
        out[hit] = np.maximum(out[hit], el.intensity)
    return PixelGrid(np.repeat(out[:, :, None], 3, axis=2))


def render_glow(source_map: PixelGrid, kernel: Kernel2D) -> PixelGrid:
    """Per-channel convolution of the source map with the APSF, clamped."""
    return PixelGrid.from_array(convolve_same(source_map, kernel), clip=True)


def compose(direct: PixelGrid, glow: PixelGrid) -> PixelGrid:
    """Element-wise sum of the direct and glow layers, clamped into [0, 1]."""
    if direct.data.shape != glow.data.shape:
        raise DimensionError(
            f"direct {direct.data.shape} and glow {glow.data.shape} shapes differ")
    return PixelGrid.from_array(
        direct.data.astype(np.float64) + glow.data.astype(np.float64), clip=True)


def synth_scene(clean: PixelGrid, sources: SourceSpec, params: ScatterParams,
                darken: float = 0.3, seed: int = 0) -> SyntheticScene:
    """Build a ground-truthed degraded scene.

    The clean frame scaled by `darken` becomes the direct transmission; the
    rasterized sources convolved with the analytic APSF become the glow; the
    mask is the rasterized source support. Deterministic for a given seed.
    """
    if not 0.0 < darken <= 1.0:
        raise ParameterError(f"darken must lie in (0, 1], got {darken}")
    rng = np.random.default_rng(seed)
    direct = PixelGrid(clean.data.astype(np.float64) * darken)
    source_map = rasterize_sources(sources, clean.height, clean.width, rng)
    kernel = apsf_analytic(params)
    degraded = PixelGrid.from_array(
        direct.data.astype(np.float64) + convolve_same(source_map, kernel), clip=True)
    mask = BinaryMask(source_map.data[:, :, 0] > 0.0)
    meta = {
        "seed": int(seed),
        "darken": float(darken),
        "scatter": {"q": params.q, "T": params.T, "radius": params.radius,
                    "series_order": params.series_order, "fov_deg": params.fov_deg,
                    "include_direct": params.include_direct},
        "sources": [
            {"shape": el.shape, "position": list(el.position), "size": el.size,
             "intensity": el.intensity,
             **({"points": [list(p) for p in el.points]} if el.points else {}),
             **({"count": el.count} if el.shape == "point-cluster" else {})}
            for el in sources.elements],
    }
    return SyntheticScene(degraded=degraded, clean_direct=direct, source_map=source_map,
                          kernel=kernel, mask=mask, meta=meta)


def save_scene(scene: SyntheticScene, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "degraded.png", scene.degraded)
    save_png(out / "clean.png", scene.clean_direct)
    save_png(out / "source.png", scene.source_map)
    save_mask_png(out / "mask.png", scene.mask)
    save_kernel(out / "kernel.csv", scene.kernel)
    (out / "meta.json").write_text(json.dumps(scene.meta, indent=2, sort_keys=True) + "\n")


def load_scene(scene_dir) -> SyntheticScene:
    d = Path(scene_dir)
    return SyntheticScene(
        degraded=load_png(d / "degraded.png"),
        clean_direct=load_png(d / "clean.png"),
        source_map=load_png(d / "source.png"),
        kernel=load_kernel(d / "kernel.csv"),
        mask=load_mask_png(d / "mask.png"),
        meta=json.loads((d / "meta.json").read_text()),
    )

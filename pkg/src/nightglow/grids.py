"""Shared value types: unit-interval pixel grids, simplex kernels, binary masks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import convolve2d

SIMPLEX_TOL = 1e-6


class DimensionError(ValueError):
    """Shapes of the operands are incompatible."""


class ParameterError(ValueError):
    """A parameter is outside its documented domain."""


def _as_float32(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float32)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise DimensionError(f"pixel data must be HxW or HxWxC, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class PixelGrid:
    """An H x W x C image of intensities in [0, 1]; C is 1 or 3.

    Instances are immutable: the backing array is copied on construction and
    flagged read-only, so grids can be shared freely across threads.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _as_float32(self.data).copy()
        h, w, c = arr.shape
        if c not in (1, 3):
            raise DimensionError(f"channel count must be 1 or 3, got {c}")
        if h < 8 or w < 8:
            raise DimensionError(f"image must be at least 8x8, got {h}x{w}")
        if not np.isfinite(arr).all():
            raise ValueError("pixel data contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError(
                f"pixel values must lie in [0, 1], got range [{arr.min()}, {arr.max()}]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def from_array(arr, clip: bool = False) -> "PixelGrid":
        """Wrap an array as a grid; with clip=True, clamp into [0, 1] first."""
        arr = _as_float32(arr)
        if clip:
            arr = np.clip(arr, 0.0, 1.0)
        return PixelGrid(arr)


@dataclass(frozen=True)
class Kernel2D:
    """Odd-sided nonnegative 2D kernel on the probability simplex."""

    weights: np.ndarray
    provenance: str = field(default="unspecified", compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).copy()
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DimensionError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 != 1 or w.shape[0] < 1:
            raise DimensionError(f"kernel side must be odd and >= 1, got {w.shape[0]}")
        if w.min() < 0.0:
            raise ValueError(f"kernel weights must be nonnegative, min={w.min()}")
        s = float(w.sum())
        if abs(s - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"kernel weights must sum to 1 within {SIMPLEX_TOL}, sum={s}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def side(self) -> int:
        return self.weights.shape[0]

    @staticmethod
    def delta(side: int = 1) -> "Kernel2D":
        w = np.zeros((side, side))
        w[side // 2, side // 2] = 1.0
        return Kernel2D(w, provenance="delta")

    @staticmethod
    def uniform(side: int) -> "Kernel2D":
        return Kernel2D(np.full((side, side), 1.0 / side ** 2), provenance="uniform")

    @staticmethod
    def normalized(weights, provenance: str = "normalized") -> "Kernel2D":
        """Project nonnegative weights onto the simplex (clip tiny negatives, rescale)."""
        w = np.asarray(weights, dtype=np.float64)
        w = np.clip(w, 0.0, None)
        s = w.sum()
        if s <= 0:
            raise ValueError("cannot normalize kernel with nonpositive total weight")
        return Kernel2D(w / s, provenance=provenance)


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel {0,1} mask matching the image it was derived from."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits).astype(bool).copy()
        if b.ndim != 2:
            raise DimensionError(f"mask must be 2D, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not bool(self.bits.any())


def reflect_pad_2d(arr: np.ndarray, pad_h: int, pad_w: int) -> np.ndarray:
    """Reflect-pad (edge pixel not repeated), applied in passes so the pad may
    exceed the axis length."""
    out = arr
    while pad_h > 0 or pad_w > 0:
        ph = min(pad_h, out.shape[0] - 1)
        pw = min(pad_w, out.shape[1] - 1)
        if ph == 0 and pw == 0:
            raise DimensionError("cannot reflect-pad a degenerate axis")
        out = np.pad(out, ((ph, ph), (pw, pw)), mode="reflect")
        pad_h -= ph
        pad_w -= pw
    return out


def convolve_same(image: PixelGrid, kernel: Kernel2D) -> np.ndarray:
    """True 2D convolution of each channel with reflect-padded borders.

    Returns the raw linear result (float64, same H x W x C shape). Values may
    drift outside [0, 1] by float error; callers clamp at composition time.
    """
    h, w = image.height, image.width
    if kernel.side > 2 * min(h, w) + 1:
        raise DimensionError(
            f"kernel side {kernel.side} exceeds 2*min(H,W)+1 = {2 * min(h, w) + 1}")
    pad = kernel.side // 2
    out = np.empty((h, w, image.channels), dtype=np.float64)
    for c in range(image.channels):
        padded = reflect_pad_2d(image.data[:, :, c].astype(np.float64), pad, pad)
        out[:, :, c] = convolve2d(padded, kernel.weights, mode="valid")
    return out


def luminance(image: PixelGrid) -> PixelGrid:
    """Max over channels per pixel (single-channel input is returned unchanged)."""
    if image.channels == 1:
        return image
    return PixelGrid(image.data.max(axis=2))

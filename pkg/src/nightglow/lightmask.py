"""Light-source location prior: threshold the brightest pixels and dilate."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grids import BinaryMask, ParameterError, PixelGrid, luminance

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MaskConfig:
    """Thresholding knobs for the light-source mask.

    A pixel is selected iff its max-channel luminance clears both the given
    percentile of the frame and the absolute floor; the floor stops dark
    frames from masking everything, the percentile stops bright frames from
    missing saturated sources. Components below min_area are dropped and the
    survivors dilated by a square (Chebyshev) radius to catch saturated rims.
    """

    percentile: float = 99.0
    absolute_floor: float = 0.85
    dilate_radius: int = 2
    min_area: int = 4

    def __post_init__(self):
        if not 50.0 < self.percentile < 100.0:
            raise ParameterError(f"percentile must lie in (50, 100), got {self.percentile}")
        if not 0.0 < self.absolute_floor <= 1.0:
            raise ParameterError(f"absolute_floor must lie in (0, 1], got {self.absolute_floor}")
        if self.dilate_radius < 0:
            raise ParameterError(f"dilate_radius must be >= 0, got {self.dilate_radius}")
        if self.min_area < 1:
            raise ParameterError(f"min_area must be >= 1, got {self.min_area}")


def extract_mask(image: PixelGrid, cfg: MaskConfig = MaskConfig()) -> BinaryMask:
    """Extract the light-source location mask from a degraded image.

    Deterministic; an all-dark image yields an empty mask (logged as a
    warning, not an error).
    """
    lum = luminance(image).data[:, :, 0].astype(np.float64)
    threshold = max(float(np.percentile(lum, cfg.percentile)), cfg.absolute_floor)
    selected = lum >= threshold

    if cfg.min_area > 1 and selected.any():
        labels, n = ndimage.label(selected)
        if n:
            areas = np.bincount(labels.ravel())
            keep = areas >= cfg.min_area
            keep[0] = False
            selected = keep[labels]

    if cfg.dilate_radius > 0 and selected.any():
        size = 2 * cfg.dilate_radius + 1
        selected = ndimage.binary_dilation(selected, structure=np.ones((size, size), bool))

    if not selected.any():
        log.warning("light mask is empty (threshold %.3f, max luminance %.3f)",
                    threshold, float(lum.max()))
    return BinaryMask(selected)

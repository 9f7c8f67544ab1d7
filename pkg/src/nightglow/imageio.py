"""PNG and kernel-file I/O.

Intensities map linearly to integer codes as value/(2^bits - 1); images are
treated as already display-linear (no gamma chunks, no color management).
"""
from __future__ import annotations

import json
from pathlib import Path

import cv2
import numpy as np
from PIL import Image

from .grids import BinaryMask, Kernel2D, PixelGrid


class ImageIOError(IOError):
    """A file could not be read or written as an image."""


def save_png(path, image: PixelGrid, bit_depth: int = 16) -> None:
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    peak = 2 ** bit_depth - 1
    arr = np.rint(image.data.astype(np.float64) * peak)
    arr = arr.astype(np.uint8 if bit_depth == 8 else np.uint16)
    if image.channels == 3:
        arr = arr[:, :, ::-1]  # cv2 expects BGR
    else:
        arr = arr[:, :, 0]
    if not cv2.imwrite(str(path), arr):
        raise ImageIOError(f"failed to write PNG: {path}")


def load_png(path) -> PixelGrid:
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageIOError(f"failed to read PNG: {path}")
    if raw.dtype == np.uint8:
        peak = 255.0
    elif raw.dtype == np.uint16:
        peak = 65535.0
    else:
        raise ImageIOError(f"unsupported PNG sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = raw[:, :, :3]
        raw = raw[:, :, ::-1]  # BGR -> RGB
    return PixelGrid(raw.astype(np.float64) / peak)


def save_mask_png(path, mask: BinaryMask) -> None:
    Image.fromarray(mask.bits).convert("1").save(str(path), format="PNG")


def load_mask_png(path) -> BinaryMask:
    try:
        img = Image.open(str(path))
    except OSError as exc:
        raise ImageIOError(f"failed to read mask PNG: {path}") from exc
    return BinaryMask(np.asarray(img.convert("L")) > 127)


def save_kernel(csv_path, kernel: Kernel2D) -> None:
    """Write kernel rows as CSV plus a `.json` sidecar {side, sum, provenance}."""
    csv_path = Path(csv_path)
    np.savetxt(csv_path, kernel.weights, delimiter=",", fmt="%.17g")
    sidecar = {
        "side": kernel.side,
        "sum": float(kernel.weights.sum()),
        "provenance": kernel.provenance,
    }
    csv_path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_kernel(csv_path) -> Kernel2D:
    csv_path = Path(csv_path)
    weights = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    sidecar_path = csv_path.with_suffix(".json")
    provenance = "unspecified"
    if sidecar_path.exists():
        provenance = json.loads(sidecar_path.read_text()).get("provenance", provenance)
    return Kernel2D(weights, provenance=provenance)

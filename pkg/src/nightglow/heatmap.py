"""False-color heat-map rendering with a fixed 256-entry perceptual ramp.

The ramp is a frozen cubehelix table (monotone lightness, so intensity order
survives the color mapping) embedded literally for bit-stable output.
"""
from __future__ import annotations

import numpy as np

from .grids import PixelGrid, luminance

_RAMP_HEX = (
    "0000000200020401030501050702070902090a030b0c040d0d040f0f051110051311061512071713081914081c15091e"
    "160a20170b22170c24180d27180e29190f2b19102d1a112f1a12311a14331a15361a16381a173a1a193b1a1a3d1a1c3f"
    "191d41191f4319204419224618234718254917274a17294b162a4c162c4d152e4e15304f143150133351133551123752"
    "123952113b53113d53103f531041530f43530f44530e46530e48530e4a530e4c520d4e520d50510d52510d54500d554f"
    "0d574e0d594d0e5b4c0e5c4b0e5e4a0f6049106148106347116445126644136743146941156a40166c3f176d3d196e3c"
    "1a6f3a1c71391d72381f73362174352375332576322776312977302c782e2e792d31792c337a2b367b2a387b293b7b28"
    "3e7c27417c26447d26477d254a7d254d7d24507d24547d24577d235a7e235e7d23617d23647d24687d246b7d256f7d25"
    "727d26767c27797c277d7c28807c2a847b2b877b2c8b7b2e8e7a2f917a31957a339879349b79369f7938a2783ba5783d"
    "a8783fab7742ae7744b17747b4774ab6764db97650bc7653be7656c17659c3765cc5765fc77563c97666cb766acd766d"
    "cf7671d17674d27678d4767bd5777fd77783d87886d9788ada788edb7991db7a95dc7a99dd7b9cdd7ca0de7da4de7da7"
    "de7eabde7faede80b2de81b5de83b9de84bcde85bfdd86c2dd88c5dd89c9dc8accdb8ccedb8dd1da8fd4d990d7d892d9"
    "d894dcd795ded697e0d599e3d49be5d39de7d29ee9d1a0ebd0a2eccfa4eecea6efcda8f1ccaaf2cbacf3caaef5c9b0f6"
    "c8b2f7c7b4f7c6b6f8c5b8f9c4baf9c3bcfac3befac2c0fbc1c2fbc1c4fbc0c6fbc0c8fbbfcafbbfcbfbbfcdfbbfcffb"
    "bed1fbbed3fabed5fabfd6f9bfd8f9bfdaf9bfdbf8c0ddf8c0def7c1e0f7c1e1f6c2e3f5c3e4f5c4e5f4c5e7f4c6e8f3"
    "c7e9f3c8eaf2c9ecf2cbedf1cceef1cdeff1cff0f0d1f1f0d2f2f0d4f2f0d6f3f0d7f4f0d9f5f0dbf6f0ddf6f0dff7f0"
    "e1f8f1e3f8f1e5f9f1e7f9f2e9faf3ebfaf3edfbf4effbf5f1fcf6f3fcf7f5fdf8f7fdf9f9fefbfbfefcfdfffdffffff"
)

RAMP = np.frombuffer(bytes.fromhex(_RAMP_HEX), dtype=np.uint8).reshape(256, 3)


def render_heatmap(image: PixelGrid) -> PixelGrid:
    """Map max-channel luminance through the ramp to a false-color image."""
    lum = luminance(image).data[:, :, 0].astype(np.float64)
    idx = np.clip(np.rint(lum * 255.0), 0, 255).astype(np.intp)
    return PixelGrid(RAMP[idx].astype(np.float64) / 255.0)

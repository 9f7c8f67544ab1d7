import numpy as np
import pytest

import nightglow as ng
from nightglow.imageio import load_png

from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"

# frozen reference scene: natural 128x128 crop, one saturating disc source,
# analytic APSF at (q=0.9, T=1.2) with enough reach that the n=3 composed
# kernel (side 43) covers the halo but the raw side-15 kernel cannot
REFERENCE_SCATTER = ng.ScatterParams(q=0.9, T=1.2, radius=20)
REFERENCE_SOURCES = ng.SourceSpec((
    ng.SourceElement(shape="disc", position=(40.0, 84.0), size=7.0, intensity=1.0),))
REFERENCE_DARKEN = 0.3


@pytest.fixture(scope="session")
def reference_clean() -> ng.PixelGrid:
    return load_png(DATA_DIR / "reference_clean.png")


@pytest.fixture(scope="session")
def reference_scene(reference_clean) -> ng.SyntheticScene:
    return ng.synth_scene(reference_clean, REFERENCE_SOURCES, REFERENCE_SCATTER,
                          darken=REFERENCE_DARKEN, seed=0)


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


def random_grid(rng, h=8, w=8, channels=3) -> ng.PixelGrid:
    return ng.PixelGrid(rng.random((h, w, channels)))

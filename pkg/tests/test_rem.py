import numpy as np
import pytest

import nightglow as ng
from nightglow.rem import save_rem_result

from conftest import random_grid

FAST_TRUNK = ng.ImageGenSpec(depth=3, widths=(8, 12, 16), skip_width=2, noise_channels=4)


def fast_config(**overrides) -> ng.RemConfig:
    base = dict(steps=60, trunk=FAST_TRUNK, seed=2)
    base.update(overrides)
    return ng.RemConfig(**base)


@pytest.fixture(scope="module")
def darkened_crop(reference_clean) -> ng.PixelGrid:
    return ng.PixelGrid(reference_clean.data[32:96, 32:96] * 0.3)


class TestEnhanceContracts:
    def test_deterministic(self, darkened_crop):
        a = ng.enhance(darkened_crop, fast_config())
        b = ng.enhance(darkened_crop, fast_config())
        np.testing.assert_array_equal(a.R.data, b.R.data)
        np.testing.assert_array_equal(a.L.data, b.L.data)
        np.testing.assert_array_equal(a.enhanced.data, b.enhanced.data)
        np.testing.assert_array_equal(a.loss_curve, b.loss_curve)

    def test_single_channel_rejected(self, rng):
        with pytest.raises(ng.ParameterError):
            ng.enhance(random_grid(rng, 16, 16, channels=1), fast_config())

    def test_recombination_invariant(self, darkened_crop):
        res = ng.enhance(darkened_crop, fast_config())
        expected = ng.recombine(res.R, res.L, res.config.gamma)
        np.testing.assert_array_equal(res.enhanced.data, expected.data)
        assert res.R.channels == 3 and res.L.channels == 1
        assert np.isfinite(res.loss_curve).all()

    def test_gamma_validation(self):
        with pytest.raises(ng.ParameterError):
            ng.RemConfig(gamma=0.0)
        with pytest.raises(ng.ParameterError):
            ng.RemConfig(gamma=1.5)


class TestEnhanceBehavior:
    def test_brightens_darkened_scene(self, darkened_crop):
        res = ng.enhance(darkened_crop, fast_config(steps=300))
        before = ng.luminance(darkened_crop).data.mean()
        after = ng.luminance(res.enhanced).data.mean()
        assert after > before

    def test_gamma_one_reconstructs_input(self, darkened_crop):
        res = ng.enhance(darkened_crop, fast_config(steps=1000, gamma=1.0))
        mae = np.abs(res.enhanced.data.astype(np.float64)
                     - darkened_crop.data.astype(np.float64)).mean()
        assert mae <= 0.03

    def test_illumination_smoother_than_input(self, darkened_crop):
        res = ng.enhance(darkened_crop, fast_config(steps=300))

        def plain_tv(plane):
            return (np.abs(np.diff(plane, axis=0)).sum()
                    + np.abs(np.diff(plane, axis=1)).sum())

        tv_l = plain_tv(res.L.data[:, :, 0].astype(np.float64))
        tv_d = plain_tv(ng.luminance(darkened_crop).data[:, :, 0].astype(np.float64))
        assert tv_l <= tv_d


class TestResultDirectory:
    def test_inventory(self, tmp_path, darkened_crop):
        res = ng.enhance(darkened_crop, fast_config(steps=5))
        save_rem_result(res, tmp_path)
        for name in ("R.png", "L.png", "enhanced.png", "loss_curve.csv", "report.json"):
            assert (tmp_path / name).exists(), name

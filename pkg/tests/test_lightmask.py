import logging

import numpy as np
import pytest
from scipy import ndimage

import nightglow as ng


def block_image(h=32, w=32, background=0.1, block=1.0, top=10, left=12, size=5):
    data = np.full((h, w, 3), background)
    data[top:top + size, left:left + size] = block
    return ng.PixelGrid(data), (top, left, size)


class TestExtractMask:
    def test_all_dark_yields_empty_mask(self, caplog):
        with caplog.at_level(logging.WARNING):
            mask = ng.extract_mask(ng.PixelGrid(np.zeros((16, 16, 3))))
        assert mask.is_empty()
        assert any("empty" in rec.message for rec in caplog.records)

    def test_block_dilated_by_radius(self):
        img, (top, left, size) = block_image()
        mask = ng.extract_mask(img)
        # oracle: threshold keeps exactly the block, then Chebyshev dilation by 2
        expected = np.zeros((32, 32), dtype=bool)
        expected[top:top + size, left:left + size] = True
        expected = ndimage.binary_dilation(expected, structure=np.ones((5, 5), bool))
        np.testing.assert_array_equal(mask.bits, expected)

    def test_recall_on_synthetic_scene(self, reference_scene):
        mask = ng.extract_mask(reference_scene.degraded)
        truth = reference_scene.mask.bits
        recall = (mask.bits & truth).sum() / truth.sum()
        assert recall >= 0.9

    def test_min_area_removes_specks(self):
        data = np.full((32, 32, 3), 0.1)
        data[4, 4] = 1.0  # single-pixel speck, below min_area
        data[20:25, 20:25] = 1.0
        mask = ng.extract_mask(ng.PixelGrid(data))
        assert not mask.bits[4, 4]
        assert mask.bits[22, 22]

    def test_raising_floor_never_adds_pixels(self, rng):
        img = ng.PixelGrid(rng.random((24, 24, 3)))
        base = ng.MaskConfig(absolute_floor=0.6, dilate_radius=0, min_area=1)
        raised = ng.MaskConfig(absolute_floor=0.9, dilate_radius=0, min_area=1)
        low = ng.extract_mask(img, base)
        high = ng.extract_mask(img, raised)
        assert not (high.bits & ~low.bits).any()

    def test_channel_permutation_invariance(self, rng):
        data = rng.random((16, 16, 3))
        data[3:5, 3:5] = 0.97
        base = ng.extract_mask(ng.PixelGrid(data))
        permuted = ng.extract_mask(ng.PixelGrid(data[:, :, [2, 0, 1]]))
        np.testing.assert_array_equal(base.bits, permuted.bits)

    def test_config_validation(self):
        with pytest.raises(ng.ParameterError):
            ng.MaskConfig(percentile=40.0)
        with pytest.raises(ng.ParameterError):
            ng.MaskConfig(absolute_floor=0.0)

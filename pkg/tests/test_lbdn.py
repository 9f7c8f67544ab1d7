import numpy as np
import pytest
import torch

import nightglow as ng
from nightglow.generators import OptimizationError
from nightglow.lbdn import save_lbdn_result

from conftest import random_grid

FAST_GEN = ng.ImageGenSpec(depth=3, widths=(8, 12, 16), skip_width=2, noise_channels=4)
FAST_KERNEL = ng.KernelGenSpec(noise_dim=32, hidden_dim=64, kernel_side=7)


def fast_config(**overrides) -> ng.LbdnConfig:
    base = dict(steps=40, image_gen=FAST_GEN, kernel_gen=FAST_KERNEL, seed=3,
                log_every=10)
    base.update(overrides)
    return ng.LbdnConfig(**base)


@pytest.fixture(scope="module")
def bright_patch_image() -> ng.PixelGrid:
    rng = np.random.default_rng(5)
    data = rng.random((64, 64, 3)) * 0.35
    data[28:36, 28:36] = 1.0
    return ng.PixelGrid(data)


class TestSuppressContracts:
    def test_empty_mask_raises(self):
        dark = ng.PixelGrid(np.full((64, 64, 3), 0.2))
        with pytest.raises(ng.NoLightSourceError):
            ng.suppress(dark, fast_config())

    def test_single_channel_rejected(self, rng):
        with pytest.raises(ng.ParameterError):
            ng.suppress(random_grid(rng, 64, 64, channels=1), fast_config())

    def test_deterministic_result(self, bright_patch_image):
        a = ng.suppress(bright_patch_image, fast_config())
        b = ng.suppress(bright_patch_image, fast_config())
        np.testing.assert_array_equal(a.D.data, b.D.data)
        np.testing.assert_array_equal(a.G.data, b.G.data)
        np.testing.assert_array_equal(a.P.data, b.P.data)
        np.testing.assert_array_equal(a.apsf.weights, b.apsf.weights)
        np.testing.assert_array_equal(a.loss_curve, b.loss_curve)

    def test_different_seed_differs(self, bright_patch_image):
        a = ng.suppress(bright_patch_image, fast_config())
        b = ng.suppress(bright_patch_image, fast_config(seed=4))
        assert not np.array_equal(a.D.data, b.D.data)

    def test_result_invariants(self, bright_patch_image):
        res = ng.suppress(bright_patch_image, fast_config())
        # hard gate: P vanishes off-mask
        off = ~res.mask.bits
        assert not res.P.data[off].any()
        # apsf is an exact simplex member with the composed support
        assert res.apsf.weights.min() >= 0
        assert abs(res.apsf.weights.sum() - 1.0) <= 1e-6
        assert res.apsf.side == 3 * (res.k.side - 1) + 1
        # G reproducible from stored parts
        recomposed = np.clip(ng.convolve_same(res.P, res.apsf), 0.0, 1.0).astype(np.float32)
        np.testing.assert_array_equal(res.G.data, recomposed)
        # residual matches the stored layers
        expected = np.mean(np.abs(
            res.D.data.astype(np.float64) + res.G.data.astype(np.float64)
            - bright_patch_image.data.astype(np.float64)))
        assert res.residual == pytest.approx(expected, abs=1e-12)
        assert np.isfinite(res.loss_curve).all()

    def test_apg_disabled_uses_raw_kernel(self, bright_patch_image):
        res = ng.suppress(bright_patch_image, fast_config(apg_enabled=False, steps=10))
        assert res.apsf.side == res.k.side

    def test_mask_prior_disabled_gates_nothing(self, bright_patch_image):
        res = ng.suppress(bright_patch_image, fast_config(mask_prior_enabled=False, steps=10))
        assert res.mask.bits.all()

    def test_non_finite_loss_raises_with_step(self, bright_patch_image, monkeypatch):
        calls = {"n": 0}
        real = ng.losses.loss_dec

        def poisoned(d, g, i):
            calls["n"] += 1
            if calls["n"] >= 25:
                return real(d, g, i) * torch.tensor(float("nan"))
            return real(d, g, i)

        monkeypatch.setattr("nightglow.lbdn.loss_dec", poisoned)
        with pytest.raises(OptimizationError) as err:
            ng.suppress(bright_patch_image, fast_config())
        assert err.value.step == 24
        assert err.value.snapshot is not None


class TestDegenerateScene:
    def test_delta_kernel_scene_keeps_background(self, reference_clean):
        # bright patch, zero scattering: off-mask content must pass through
        clean = ng.PixelGrid(reference_clean.data[:64, 64:])
        spec = ng.SourceSpec((ng.SourceElement(
            shape="rectangle", position=(32.0, 32.0), size=4.0, intensity=1.0),))
        source = ng.synth_scene(clean, spec, ng.ScatterParams(q=0.9, T=1.2, radius=8),
                                darken=1.0, seed=0)
        delta_scene = ng.compose(source.clean_direct, ng.render_glow(
            source.source_map, ng.Kernel2D.delta(3)))
        res = ng.suppress(delta_scene, fast_config(steps=800))
        off = ~res.mask.bits
        gap = np.abs(res.D.data.astype(np.float64)
                     - delta_scene.data.astype(np.float64))[off].mean()
        assert gap <= 0.03


class TestResultDirectory:
    def test_inventory(self, tmp_path, bright_patch_image):
        res = ng.suppress(bright_patch_image, fast_config(steps=10))
        save_lbdn_result(res, tmp_path)
        for name in ("D.png", "G.png", "P.png", "mask.png", "apsf.csv", "apsf.json",
                     "k.csv", "k.json", "loss_curve.csv", "report.json"):
            assert (tmp_path / name).exists(), name
        curve = np.loadtxt(tmp_path / "loss_curve.csv", delimiter=",", skiprows=1)
        assert curve.shape == (10, 2)

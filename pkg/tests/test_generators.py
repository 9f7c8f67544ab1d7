import numpy as np
import pytest
import torch

import nightglow as ng
from nightglow.generators import (ImageGenerator, KernelGenerator, gradient,
                                  init_image_gen, init_kernel_gen)
from nightglow.imageio import load_png

from conftest import DATA_DIR

SMALL_SPEC = ng.ImageGenSpec(depth=3, widths=(8, 12, 16), skip_width=2,
                             noise_channels=4, noise_perturb_std=0.0)


def expected_image_gen_count(spec: ng.ImageGenSpec) -> int:
    """Closed-form parameter count from the documented architecture."""
    def conv(cin, cout, k):
        return cin * cout * k * k + cout

    def bn(c):
        return 2 * c

    total = 0
    ch = spec.noise_channels
    for w in spec.widths:
        total += conv(ch, w, 3) + bn(w)                      # down
        total += conv(ch, spec.skip_width, 1) + bn(spec.skip_width)  # skip tap
        ch = w
    prev = spec.widths[-1]
    for i in reversed(range(spec.depth)):
        out_w = spec.widths[max(i - 1, 0)]
        total += bn(prev + spec.skip_width)
        total += conv(prev + spec.skip_width, out_w, 3) + bn(out_w)
        total += conv(out_w, out_w, 1) + bn(out_w)
        prev = out_w
    total += conv(prev, spec.output_channels, 1)             # head
    return total


class TestInitDeterminism:
    def test_same_seed_identical(self):
        a = init_image_gen(SMALL_SPEC, 7, (16, 16))
        b = init_image_gen(SMALL_SPEC, 7, (16, 16))
        pa, pb = a.snapshot_params(), b.snapshot_params()
        assert list(pa.layers) == list(pb.layers)
        for name in pa.layers:
            np.testing.assert_array_equal(pa.layers[name], pb.layers[name])
        np.testing.assert_array_equal(a.noise.numpy(), b.noise.numpy())

    def test_different_seeds_differ(self):
        a = init_image_gen(SMALL_SPEC, 7, (16, 16))
        b = init_image_gen(SMALL_SPEC, 8, (16, 16))
        assert any(not np.array_equal(x, y) for x, y in
                   zip(a.snapshot_params().layers.values(),
                       b.snapshot_params().layers.values()))

    def test_parameter_count_closed_form(self):
        for spec in (SMALL_SPEC, ng.ImageGenSpec()):
            gen = init_image_gen(spec, 0, (32, 32))
            assert gen.snapshot_params().total_count() == expected_image_gen_count(spec)

    def test_kernel_gen_deterministic(self):
        a = init_kernel_gen(ng.KernelGenSpec(), 3)
        b = init_kernel_gen(ng.KernelGenSpec(), 3)
        np.testing.assert_array_equal(ng.gen_kernel(a).weights, ng.gen_kernel(b).weights)


class TestGenImage:
    def test_output_is_valid_grid(self):
        gen = init_image_gen(SMALL_SPEC, 1, (20, 24))
        out = ng.gen_image(gen)
        assert (out.height, out.width, out.channels) == (20, 24, 3)
        assert 0.0 <= out.data.min() and out.data.max() <= 1.0

    def test_deterministic_without_perturbation(self):
        gen = init_image_gen(SMALL_SPEC, 5, (16, 16))
        np.testing.assert_array_equal(ng.gen_image(gen).data, ng.gen_image(gen).data)

    def test_non_multiple_size_padded_and_cropped(self):
        gen = init_image_gen(SMALL_SPEC, 2, (19, 13))
        out = ng.gen_image(gen)
        assert (out.height, out.width) == (19, 13)

    def test_self_fit_sanity(self):
        # DIP oracle: the generator alone can fit a fixed natural target
        target_grid = load_png(DATA_DIR / "reference_clean.png")
        target = torch.from_numpy(target_grid.data[40:72, 40:72].transpose(2, 0, 1).copy())
        gen = init_image_gen(ng.ImageGenSpec(noise_perturb_std=0.0), 11, (32, 32))
        opt = torch.optim.Adam(gen.parameters(), lr=0.01)
        for _ in range(500):
            opt.zero_grad()
            loss = (gen.forward() - target).abs().mean()
            loss.backward()
            opt.step()
        with torch.no_grad():
            mae = float((gen.forward() - target).abs().mean())
        assert mae <= 0.05


class TestGenKernel:
    def test_simplex_for_arbitrary_parameters(self, rng):
        spec = ng.KernelGenSpec(noise_dim=20, hidden_dim=40, kernel_side=7)
        gen = init_kernel_gen(spec, 0)
        for _ in range(10):
            with torch.no_grad():
                for p in gen.parameters():
                    p.copy_(torch.from_numpy(
                        rng.normal(scale=3.0, size=p.shape)).to(p.dtype))
            k = ng.gen_kernel(gen)
            assert k.weights.min() >= 0.0
            assert abs(k.weights.sum() - 1.0) <= 1e-6

    def test_zero_logits_give_uniform(self):
        gen = init_kernel_gen(ng.KernelGenSpec(kernel_side=5), 0)
        with torch.no_grad():
            gen.module.fc2.weight.zero_()
            gen.module.fc2.bias.zero_()
        np.testing.assert_allclose(ng.gen_kernel(gen).weights, 1.0 / 25.0, atol=1e-9)

    def test_fits_gaussian_target(self):
        side = 15
        yy, xx = np.mgrid[-7:8, -7:8]
        target_np = np.exp(-(xx ** 2 + yy ** 2) / (2 * 2.0 ** 2))
        target_np /= target_np.sum()
        target = torch.from_numpy(target_np).float()
        gen = init_kernel_gen(ng.KernelGenSpec(kernel_side=side), 4)
        opt = torch.optim.Adam(gen.parameters(), lr=1e-3)
        for _ in range(1000):
            opt.zero_grad()
            loss = (gen.forward() - target).abs().sum()
            loss.backward()
            opt.step()
        final = np.abs(ng.gen_kernel(gen).weights - target_np).sum()
        assert final <= 0.05


class TestGradientOp:
    def test_constant_loss(self):
        gen = init_kernel_gen(ng.KernelGenSpec(noise_dim=10, hidden_dim=10, kernel_side=3), 0)
        loss = gen.forward().sum() * 0.0
        grads = gradient(loss, gen.parameters())
        assert all(not g.abs().any() for g in grads)

    def test_softmax_sum_is_constant(self):
        gen = init_kernel_gen(ng.KernelGenSpec(noise_dim=10, hidden_dim=10, kernel_side=3), 1)
        grads = gradient(gen.forward().sum(), gen.parameters())
        assert all(float(g.abs().max()) <= 1e-6 for g in grads)

    @pytest.mark.parametrize("family", ["image", "kernel"])
    def test_matches_finite_differences(self, family, rng):
        if family == "image":
            gen = ImageGenerator(ng.ImageGenSpec(depth=2, widths=(6, 8), skip_width=2,
                                                 noise_channels=3, noise_perturb_std=0.0),
                                 3, (8, 8))
            module, forward = gen.module, gen.forward
        else:
            gen = KernelGenerator(ng.KernelGenSpec(noise_dim=16, hidden_dim=24,
                                                   kernel_side=5), 3)
            module, forward = gen.module, gen.forward
        module.double()
        gen.noise = gen.noise.double()
        params = gen.parameters()
        weights = torch.from_numpy(rng.random(tuple(forward().shape)))
        grads = gradient((forward() * weights).sum(), params)
        step = 1e-5
        for _ in range(100):
            ti = int(rng.integers(len(params)))
            idx = int(rng.integers(params[ti].numel()))
            with torch.no_grad():
                base = float(params[ti].view(-1)[idx])
                params[ti].view(-1)[idx] = base + step
                up = float((forward() * weights).sum())
                params[ti].view(-1)[idx] = base - step
                down = float((forward() * weights).sum())
                params[ti].view(-1)[idx] = base
            fd = (up - down) / (2 * step)
            analytic = float(grads[ti].view(-1)[idx])
            assert abs(fd - analytic) / max(abs(fd), abs(analytic), 1e-6) <= 1e-3

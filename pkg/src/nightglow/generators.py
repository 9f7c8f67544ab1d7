"""Per-image function approximators: two skip encoder-decoders driven by fixed
random noise, and a fully-connected kernel generator whose softmax output is a
simplex member by construction.

Architecture of the image generator: `depth` stride-2 encoder levels of the
given widths (3x3 reflect-padded convs, batch norm, leaky ReLU), a 1x1 skip
branch per level, and a mirrored decoder (bilinear x2 upsample, concat skip,
3x3 conv + 1x1 conv) feeding a logistic 1x1 head. Weights initialize from a
seeded uniform fan-in scheme, so identical (spec, seed) gives identical
parameters; the input noise is sampled once per run and frozen.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .grids import Kernel2D, ParameterError, PixelGrid


class OptimizationError(RuntimeError):
    """The optimization produced a non-finite quantity."""


@dataclass(frozen=True)
class ImageGenSpec:
    depth: int = 5
    widths: tuple[int, ...] = (16, 32, 64, 64, 64)
    skip_width: int = 4
    output_channels: int = 3
    noise_channels: int = 16
    noise_perturb_std: float = 0.03
    upsample: str = "bilinear"
    output_activation: str = "logistic"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.depth < 2:
            raise ParameterError(f"depth must be >= 2, got {self.depth}")
        if len(self.widths) != self.depth:
            raise ParameterError(
                f"widths must list one channel count per level: got {len(self.widths)} "
                f"for depth {self.depth}")
        if any(w < 1 for w in self.widths) or self.skip_width < 1:
            raise ParameterError("all widths must be >= 1")
        if self.output_channels not in (1, 3):
            raise ParameterError(f"output_channels must be 1 or 3, got {self.output_channels}")
        if self.noise_channels < 1:
            raise ParameterError("noise_channels must be >= 1")
        if self.noise_perturb_std < 0:
            raise ParameterError("noise_perturb_std must be >= 0")
        if self.upsample != "bilinear":
            raise ParameterError(f"unsupported upsample mode: {self.upsample}")
        if self.output_activation != "logistic":
            raise ParameterError(f"unsupported output activation: {self.output_activation}")


@dataclass(frozen=True)
class KernelGenSpec:
    noise_dim: int = 200
    hidden_dim: int = 1000
    kernel_side: int = 15

    def __post_init__(self):
        if self.kernel_side % 2 != 1 or self.kernel_side < 1:
            raise ParameterError(f"kernel_side must be odd and >= 1, got {self.kernel_side}")
        if self.noise_dim < 1 or self.hidden_dim < 1:
            raise ParameterError("noise_dim and hidden_dim must be >= 1")


@dataclass(frozen=True)
class GeneratorParams:
    """Snapshot of generator weights keyed by layer path, with seed provenance."""

    layers: "OrderedDict[str, np.ndarray]"
    seed: int

    def total_count(self) -> int:
        return sum(a.size for a in self.layers.values())


def _norm(width: int) -> nn.BatchNorm2d:
    return nn.BatchNorm2d(width, track_running_stats=False)


class SkipTrunk(nn.Module):
    """Encoder-decoder trunk; emits `widths[0]` feature channels at input size."""

    def __init__(self, in_channels: int, spec: ImageGenSpec):
        super().__init__()
        self.downs = nn.ModuleList()
        self.skips = nn.ModuleList()
        self.ups = nn.ModuleList()
        ch = in_channels
        for w in spec.widths:
            self.downs.append(nn.Sequential(
                nn.Conv2d(ch, w, 3, stride=2, padding=1, padding_mode="reflect"),
                _norm(w), nn.LeakyReLU(0.2)))
            self.skips.append(nn.Sequential(
                nn.Conv2d(ch, spec.skip_width, 1), _norm(spec.skip_width), nn.LeakyReLU(0.2)))
            ch = w
        prev = spec.widths[-1]
        for i in reversed(range(spec.depth)):
            out_w = spec.widths[max(i - 1, 0)]
            self.ups.append(nn.Sequential(
                _norm(prev + spec.skip_width),
                nn.Conv2d(prev + spec.skip_width, out_w, 3, padding=1, padding_mode="reflect"),
                _norm(out_w), nn.LeakyReLU(0.2),
                nn.Conv2d(out_w, out_w, 1),
                _norm(out_w), nn.LeakyReLU(0.2)))
            prev = out_w

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        taps = []
        for down, skip in zip(self.downs, self.skips):
            taps.append(skip(x))
            x = down(x)
        for i, up in enumerate(self.ups):
            x = F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = up(torch.cat([x, taps[len(taps) - 1 - i]], dim=1))
        return x


def init_parameters(module: nn.Module, seed: int) -> None:
    """Uniform fan-in initialization: weights ~ U(+-1/sqrt(fan_in)), biases
    zero, norm layers identity. Deterministic in module definition order."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.Linear)):
                fan_in = m.weight.shape[1]
                if m.weight.dim() == 4:
                    fan_in *= m.weight.shape[2] * m.weight.shape[3]
                bound = 1.0 / math.sqrt(fan_in)
                m.weight.uniform_(-bound, bound, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.BatchNorm2d):
                m.weight.fill_(1.0)
                m.bias.zero_()


def _padded_hw(target_hw: tuple[int, int], depth: int) -> tuple[int, int]:
    # bottleneck must keep at least 2x2 samples for batch-norm statistics
    factor = 2 ** depth
    return tuple(max(int(math.ceil(s / factor)), 2) * factor for s in target_hw)


def _snapshot(module: nn.Module, seed: int) -> GeneratorParams:
    layers = OrderedDict(
        (name, p.detach().cpu().numpy().copy()) for name, p in module.named_parameters())
    return GeneratorParams(layers=layers, seed=seed)


class ImageGenerator:
    """A seeded skip network plus its frozen input noise, producing images of
    a fixed target size in (0, 1)."""

    def __init__(self, spec: ImageGenSpec, seed: int, target_hw: tuple[int, int]):
        self.spec = spec
        self.seed = int(seed)
        self.target_hw = (int(target_hw[0]), int(target_hw[1]))
        self.module = nn.Sequential(OrderedDict([
            ("trunk", SkipTrunk(spec.noise_channels, spec)),
            ("head", nn.Conv2d(spec.widths[0], spec.output_channels, 1)),
        ]))
        init_parameters(self.module, self.seed)
        gen = torch.Generator().manual_seed(int(seed) ^ 0x5EED)
        hp, wp = _padded_hw(self.target_hw, spec.depth)
        self.noise = torch.rand((1, spec.noise_channels, hp, wp), generator=gen) * 0.1

    def forward(self, perturb_generator: torch.Generator | None = None) -> torch.Tensor:
        """Run the generator; optionally perturb the frozen noise with the
        spec's per-step additive noise drawn from the given generator."""
        z = self.noise
        if perturb_generator is not None and self.spec.noise_perturb_std > 0:
            z = z + self.spec.noise_perturb_std * torch.randn(
                z.shape, generator=perturb_generator)
        out = torch.sigmoid(self.module(z))[0]
        h, w = self.target_hw
        return out[:, :h, :w]

    def parameters(self):
        return list(self.module.parameters())

    def snapshot_params(self) -> GeneratorParams:
        return _snapshot(self.module, self.seed)


class KernelGenerator:
    """Fully-connected kernel estimator; softmax output realizes the simplex
    constraints (nonnegative, sums to one) for arbitrary parameter values."""

    def __init__(self, spec: KernelGenSpec, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self.module = nn.Sequential(OrderedDict([
            ("fc1", nn.Linear(spec.noise_dim, spec.hidden_dim)),
            ("act", nn.ReLU()),
            ("fc2", nn.Linear(spec.hidden_dim, spec.kernel_side ** 2)),
        ]))
        init_parameters(self.module, self.seed)
        gen = torch.Generator().manual_seed(int(seed) ^ 0x5EED)
        self.noise = torch.rand((spec.noise_dim,), generator=gen)

    def forward(self) -> torch.Tensor:
        logits = self.module(self.noise)
        side = self.spec.kernel_side
        return F.softmax(logits, dim=-1).view(side, side)

    def parameters(self):
        return list(self.module.parameters())

    def snapshot_params(self) -> GeneratorParams:
        return _snapshot(self.module, self.seed)


def init_image_gen(spec: ImageGenSpec, seed: int,
                   target_hw: tuple[int, int]) -> ImageGenerator:
    return ImageGenerator(spec, seed, target_hw)


def init_kernel_gen(spec: KernelGenSpec, seed: int) -> KernelGenerator:
    return KernelGenerator(spec, seed)


def gen_image(generator: ImageGenerator) -> PixelGrid:
    """Deterministic forward pass (perturbation disabled) as a PixelGrid."""
    with torch.no_grad():
        out = generator.forward()
    return PixelGrid.from_array(out.numpy().transpose(1, 2, 0), clip=True)


def gen_kernel(generator: KernelGenerator) -> Kernel2D:
    with torch.no_grad():
        w = generator.forward().numpy().astype(np.float64)
    # softmax guarantees positivity; renormalize only to absorb float32 drift
    return Kernel2D(w / w.sum(), provenance=f"kernel_fcn(seed={generator.seed})")


def gradient(loss: torch.Tensor, params) -> list[torch.Tensor]:
    """Exact reverse-mode gradients of a scalar loss for each parameter.

    Parameters not reached by the loss get zero gradients; any non-finite
    gradient raises OptimizationError naming the offending parameter index.
    """
    if loss.dim() != 0:
        raise ParameterError("loss must be a scalar")
    params = list(params)
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    out = []
    for idx, (p, g) in enumerate(zip(params, grads)):
        g = torch.zeros_like(p) if g is None else g
        if not torch.isfinite(g).all():
            raise OptimizationError(
                f"non-finite gradient for parameter {idx} with shape {tuple(p.shape)}")
        out.append(g)
    return out

"""Retinex enhancement: decompose the direct transmission into reflectance and
illumination with a two-headed generator, then rebrighten via gamma-corrected
illumination."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .generators import (ImageGenSpec, OptimizationError, SkipTrunk, _padded_hw,
                         init_parameters)
from .grids import ParameterError, PixelGrid
from .lbdn import ADAM_BETAS, ADAM_EPS
from .losses import (LossWeights, fc_consistency, illumination_guidance, loss_tex,
                     retinex_reconstruction)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RemConfig:
    """Enhancement-stage parameters; gamma < 1 brightens the illumination.

    tex_enabled and fc_enabled switch the texture-smoothness and max-channel
    consistency terms for ablation.
    """

    steps: int = 1000
    lr: float = 0.01
    gamma: float = 0.5
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    trunk: ImageGenSpec = field(default_factory=ImageGenSpec)
    tex_enabled: bool = True
    fc_enabled: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ParameterError("learning rate must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")


@dataclass(frozen=True)
class RemResult:
    """Decomposition and brightened output; enhanced is recomputed from the
    stored parts, so enhanced == clamp(R * L^gamma) holds exactly."""

    R: PixelGrid
    L: PixelGrid
    enhanced: PixelGrid
    loss_curve: np.ndarray
    seed: int
    config: RemConfig


class RetinexGenerator(nn.Module):
    """Shared encoder-decoder trunk with a 3-channel reflectance head and a
    1-channel illumination head, both logistic."""

    def __init__(self, spec: ImageGenSpec, seed: int, target_hw: tuple[int, int]):
        super().__init__()
        self.spec = spec
        self.seed = int(seed)
        self.target_hw = (int(target_hw[0]), int(target_hw[1]))
        self.trunk = SkipTrunk(spec.noise_channels, spec)
        self.head_r = nn.Conv2d(spec.widths[0], 3, 1)
        self.head_l = nn.Conv2d(spec.widths[0], 1, 1)
        init_parameters(self, self.seed)
        gen = torch.Generator().manual_seed(int(seed) ^ 0x5EED)
        hp, wp = _padded_hw(self.target_hw, spec.depth)
        self.noise = torch.rand((1, spec.noise_channels, hp, wp), generator=gen) * 0.1

    def forward(self, perturb_generator: torch.Generator | None = None):
        z = self.noise
        if perturb_generator is not None and self.spec.noise_perturb_std > 0:
            z = z + self.spec.noise_perturb_std * torch.randn(
                z.shape, generator=perturb_generator)
        feats = self.trunk(z)
        h, w = self.target_hw
        r = torch.sigmoid(self.head_r(feats))[0, :, :h, :w]
        l = torch.sigmoid(self.head_l(feats))[0, :, :h, :w]
        return r, l


def enhance(direct: PixelGrid, cfg: RemConfig = RemConfig()) -> RemResult:
    """Fit the reflectance/illumination decomposition of a direct-transmission
    frame and return the gamma-brightened recombination.

    Deterministic for a given (cfg, seed) at a fixed thread count.
    """
    if direct.channels != 3:
        raise ParameterError("enhancement expects a 3-channel image")
    torch.set_num_threads(cfg.threads)

    seeds = np.random.SeedSequence(cfg.seed).generate_state(2)
    model = RetinexGenerator(cfg.trunk, int(seeds[0]), (direct.height, direct.width))
    perturb = torch.Generator().manual_seed(int(seeds[1]))
    target = torch.from_numpy(direct.data.transpose(2, 0, 1).copy())
    w = cfg.weights
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                                 betas=ADAM_BETAS, eps=ADAM_EPS)

    curve = np.empty(cfg.steps, dtype=np.float64)
    for step in range(cfg.steps):
        optimizer.zero_grad()
        r, l = model.forward(perturb)
        retinex = retinex_reconstruction(r, l, target)
        loss = w.w_retinex * retinex
        if cfg.fc_enabled:
            # the max-channel constraints: consistency of the reflectance plus
            # the guidance that keeps the illumination split non-degenerate
            loss = loss + w.w_retinex * fc_consistency(r, target)
            loss = loss + w.w_illum * illumination_guidance(l, target)
        if cfg.tex_enabled:
            loss = loss + w.w_tex * loss_tex(l, r, w.lambda_grad)
        value = float(loss.detach())
        if not np.isfinite(value):
            err = OptimizationError(f"non-finite enhancement loss {value} at step {step}")
            err.step = step
            raise err
        curve[step] = value
        loss.backward()
        optimizer.step()
        if step % 100 == 0:
            log.debug("rem step %d: loss=%.6f", step, value)

    with torch.no_grad():
        r, l = model.forward()
    r_grid = PixelGrid.from_array(r.numpy().transpose(1, 2, 0), clip=True)
    l_grid = PixelGrid.from_array(l.numpy().transpose(1, 2, 0), clip=True)
    enhanced = recombine(r_grid, l_grid, cfg.gamma)
    return RemResult(R=r_grid, L=l_grid, enhanced=enhanced, loss_curve=curve,
                     seed=cfg.seed, config=cfg)


def recombine(reflectance: PixelGrid, illumination: PixelGrid, gamma: float) -> PixelGrid:
    """clamp(R * L^gamma) with the illumination broadcast across channels."""
    l = illumination.data.astype(np.float64)[:, :, :1]
    r = reflectance.data.astype(np.float64)
    return PixelGrid.from_array(r * np.power(l, gamma), clip=True)


def save_rem_result(result: RemResult, out_dir) -> None:
    from .imageio import save_png
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "R.png", result.R)
    save_png(out / "L.png", result.L)
    save_png(out / "enhanced.png", result.enhanced)
    np.savetxt(out / "loss_curve.csv", np.column_stack(
        [np.arange(result.loss_curve.size), result.loss_curve]),
        delimiter=",", fmt=["%d", "%.10g"], header="step,loss", comments="")
    (out / "report.json").write_text(json.dumps({
        "stage": "rem",
        "seed": result.seed,
        "final_loss": float(result.loss_curve[-1]),
        "config": config_echo(result.config),
    }, indent=2, sort_keys=True) + "\n")


def config_echo(cfg: RemConfig) -> dict:
    return {
        "steps": cfg.steps, "lr": cfg.lr, "gamma": cfg.gamma, "seed": cfg.seed,
        "tex_enabled": cfg.tex_enabled, "fc_enabled": cfg.fc_enabled,
        "threads": cfg.threads,
        "weights": {"w_dec": cfg.weights.w_dec, "w_gen": cfg.weights.w_gen,
                    "w_retinex": cfg.weights.w_retinex, "w_tex": cfg.weights.w_tex,
                    "w_excl": cfg.weights.w_excl, "lambda_grad": cfg.weights.lambda_grad},
        "trunk": {"depth": cfg.trunk.depth, "widths": list(cfg.trunk.widths),
                  "skip_width": cfg.trunk.skip_width,
                  "noise_channels": cfg.trunk.noise_channels,
                  "noise_perturb_std": cfg.trunk.noise_perturb_std},
    }

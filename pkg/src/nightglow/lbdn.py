"""Zero-shot light-aware blind deconvolution: jointly optimize two image
generators and a kernel generator so the input decomposes into direct
transmission plus masked-source glow."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import torchops
from .apsf import self_convolve
from .generators import (ImageGenerator, ImageGenSpec, KernelGenerator, KernelGenSpec,
                         OptimizationError, gen_kernel)
from .grids import BinaryMask, Kernel2D, ParameterError, PixelGrid, convolve_same
from .imageio import save_kernel, save_mask_png, save_png
from .lightmask import MaskConfig, extract_mask
from .losses import LossWeights, loss_dec, loss_gen

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


class NoLightSourceError(RuntimeError):
    """The light mask came up empty; run the enhancement stage directly."""


@dataclass(frozen=True)
class LbdnConfig:
    """Run parameters of the blind-deconvolution stage.

    The optimizer is Adam with betas (0.9, 0.999) and eps 1e-8; the effective
    blur kernel is the learned kernel self-convolved n_selfconv times (the
    raw kernel when apg_enabled is off); mask_prior_enabled turns both the
    hard mask gate and the confinement loss term off for ablation.
    """

    n_selfconv: int = 3
    steps: int = 3000
    lr_image_gens: float = 0.01
    lr_kernel_gen: float = 1e-4
    seed: int = 0
    mask: MaskConfig = field(default_factory=MaskConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    log_every: int = 100
    image_gen: ImageGenSpec = field(default_factory=ImageGenSpec)
    kernel_gen: KernelGenSpec = field(default_factory=KernelGenSpec)
    apg_enabled: bool = True
    mask_prior_enabled: bool = True
    threads: int = 1

    def __post_init__(self):
        if self.n_selfconv < 1:
            raise ParameterError(f"n_selfconv must be >= 1, got {self.n_selfconv}")
        if self.steps < 1:
            raise ParameterError(f"steps must be >= 1, got {self.steps}")
        if self.lr_image_gens <= 0 or self.lr_kernel_gen <= 0:
            raise ParameterError("learning rates must be positive")
        if self.log_every < 1:
            raise ParameterError("log_every must be >= 1")
        if self.threads < 1:
            raise ParameterError("threads must be >= 1")


@dataclass(frozen=True)
class LbdnResult:
    """Decomposition outputs; G is recomputed from the stored gated source map
    and kernel, so G == clamp(convolve_same(P, apsf)) holds exactly."""

    D: PixelGrid
    G: PixelGrid
    P: PixelGrid
    apsf: Kernel2D
    k: Kernel2D
    mask: BinaryMask
    loss_curve: np.ndarray
    residual: float
    seed: int
    config: LbdnConfig


def _derive_seeds(seed: int) -> tuple[int, int, int, int]:
    state = np.random.SeedSequence(seed).generate_state(4)
    return tuple(int(s) for s in state)


def suppress(image: PixelGrid, cfg: LbdnConfig = LbdnConfig()) -> LbdnResult:
    """Run the zero-shot decomposition of a degraded frame.

    Deterministic for a given (cfg, seed) at a fixed thread count. Raises
    NoLightSourceError when the mask prior is enabled but empty, and
    OptimizationError (carrying the step index) if the loss turns non-finite.
    """
    if image.channels != 3:
        raise ParameterError("suppression expects a 3-channel image")
    torch.set_num_threads(cfg.threads)

    if cfg.mask_prior_enabled:
        mask = extract_mask(image, cfg.mask)
        if mask.is_empty():
            raise NoLightSourceError(
                "light mask is empty: no source above threshold; apply the "
                "enhancement stage directly instead")
    else:
        mask = BinaryMask(np.ones((image.height, image.width), dtype=bool))

    seed_d, seed_p, seed_k, seed_noise = _derive_seeds(cfg.seed)
    hw = (image.height, image.width)
    gen_d = ImageGenerator(cfg.image_gen, seed_d, hw)
    gen_p = ImageGenerator(cfg.image_gen, seed_p, hw)
    gen_k = KernelGenerator(cfg.kernel_gen, seed_k)
    perturb = torch.Generator().manual_seed(seed_noise)

    target = torch.from_numpy(image.data.transpose(2, 0, 1).copy())
    m0 = torch.from_numpy(mask.bits.astype(np.float32))
    w = cfg.weights

    optimizer = torch.optim.Adam([
        {"params": gen_d.parameters() + gen_p.parameters(), "lr": cfg.lr_image_gens},
        {"params": gen_k.parameters(), "lr": cfg.lr_kernel_gen},
    ], betas=ADAM_BETAS, eps=ADAM_EPS)

    curve = np.empty(cfg.steps, dtype=np.float64)
    last_good = None
    for step in range(cfg.steps):
        optimizer.zero_grad()
        d = gen_d.forward(perturb)
        p = gen_p.forward(perturb)
        p_eff = p * m0
        k = gen_k.forward()
        apsf = torchops.self_convolve(k, cfg.n_selfconv) if cfg.apg_enabled else k
        g = torchops.conv_same_reflect(p_eff, apsf)
        loss = w.w_dec * loss_dec(d, g, target) + w.w_gen * loss_gen(
            p, d, g, m0, w_excl=w.w_excl,
            confinement_enabled=cfg.mask_prior_enabled)
        value = float(loss.detach())
        if not np.isfinite(value):
            err = OptimizationError(
                f"non-finite loss {value} at step {step}; last good snapshot at "
                f"step {last_good[0] if last_good else 'none'}")
            err.step = step
            err.snapshot = last_good[1] if last_good else None
            raise err
        curve[step] = value
        loss.backward()
        optimizer.step()
        if step % cfg.log_every == 0:
            log.debug("lbdn step %d: loss=%.6f", step, value)
            last_good = (step, {
                "D": d.detach().numpy().copy(), "G": g.detach().numpy().copy()})

    return _finalize(image, mask, gen_d, gen_p, gen_k, cfg, curve)


def _finalize(image, mask, gen_d, gen_p, gen_k, cfg, curve) -> LbdnResult:
    with torch.no_grad():
        d = gen_d.forward().numpy().transpose(1, 2, 0)
        p_raw = gen_p.forward().numpy().transpose(1, 2, 0)
    p_eff = p_raw * mask.bits[:, :, None]
    k = gen_kernel(gen_k)
    apsf = self_convolve(k, cfg.n_selfconv) if cfg.apg_enabled else k

    d_grid = PixelGrid.from_array(d, clip=True)
    p_grid = PixelGrid.from_array(p_eff, clip=True)
    g_grid = PixelGrid.from_array(convolve_same(p_grid, apsf), clip=True)
    residual = float(np.mean(np.abs(
        d_grid.data.astype(np.float64) + g_grid.data.astype(np.float64)
        - image.data.astype(np.float64))))
    return LbdnResult(D=d_grid, G=g_grid, P=p_grid, apsf=apsf, k=k, mask=mask,
                      loss_curve=curve, residual=residual, seed=cfg.seed, config=cfg)


def save_lbdn_result(result: LbdnResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_png(out / "D.png", result.D)
    save_png(out / "G.png", result.G)
    save_png(out / "P.png", result.P)
    save_mask_png(out / "mask.png", result.mask)
    save_kernel(out / "apsf.csv", result.apsf)
    save_kernel(out / "k.csv", result.k)
    np.savetxt(out / "loss_curve.csv", np.column_stack(
        [np.arange(result.loss_curve.size), result.loss_curve]),
        delimiter=",", fmt=["%d", "%.10g"], header="step,loss", comments="")
    (out / "report.json").write_text(json.dumps({
        "stage": "lbdn",
        "seed": result.seed,
        "residual": result.residual,
        "final_loss": float(result.loss_curve[-1]),
        "mask_pixels": result.mask.count(),
        "config": config_echo(result.config),
    }, indent=2, sort_keys=True) + "\n")


def config_echo(cfg: LbdnConfig) -> dict:
    return {
        "n_selfconv": cfg.n_selfconv, "steps": cfg.steps,
        "lr_image_gens": cfg.lr_image_gens, "lr_kernel_gen": cfg.lr_kernel_gen,
        "seed": cfg.seed, "log_every": cfg.log_every,
        "apg_enabled": cfg.apg_enabled, "mask_prior_enabled": cfg.mask_prior_enabled,
        "threads": cfg.threads,
        "mask": {"percentile": cfg.mask.percentile, "absolute_floor": cfg.mask.absolute_floor,
                 "dilate_radius": cfg.mask.dilate_radius, "min_area": cfg.mask.min_area},
        "weights": {"w_dec": cfg.weights.w_dec, "w_gen": cfg.weights.w_gen,
                    "w_retinex": cfg.weights.w_retinex, "w_tex": cfg.weights.w_tex,
                    "w_excl": cfg.weights.w_excl, "lambda_grad": cfg.weights.lambda_grad},
        "image_gen": {"depth": cfg.image_gen.depth, "widths": list(cfg.image_gen.widths),
                      "skip_width": cfg.image_gen.skip_width,
                      "output_channels": cfg.image_gen.output_channels,
                      "noise_channels": cfg.image_gen.noise_channels,
                      "noise_perturb_std": cfg.image_gen.noise_perturb_std},
        "kernel_gen": {"noise_dim": cfg.kernel_gen.noise_dim,
                       "hidden_dim": cfg.kernel_gen.hidden_dim,
                       "kernel_side": cfg.kernel_gen.kernel_side},
    }


def with_seed(cfg: LbdnConfig, seed: int) -> LbdnConfig:
    return replace(cfg, seed=seed)

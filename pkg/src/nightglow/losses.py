"""Objective terms of the decomposition and enhancement stages.

Every loss is a differentiable scalar on (C, H, W) torch tensors; reductions
are means over pixel count so magnitudes are resolution-independent.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .grids import ParameterError
from .torchops import conv_same_reflect, grad_pair, max_channel

_NORM_EPS = 1e-6


@dataclass(frozen=True)
class LossWeights:
    """Weights of the training objective; generation terms default to 1.0 and
    enhancement terms to 0.5, with the gradient-exclusion sub-term of the
    generation loss scaled by w_excl on top.

    w_illum scales the quadratic illumination-guidance term of the enhancement
    stage; it must stay small so guidance balances (rather than overrides) the
    max-channel consistency term.
    """

    w_dec: float = 1.0
    w_gen: float = 1.0
    w_retinex: float = 0.5
    w_tex: float = 0.5
    w_excl: float = 0.01
    w_illum: float = 0.05
    lambda_grad: float = 10.0

    def __post_init__(self):
        for name in ("w_dec", "w_gen", "w_retinex", "w_tex", "w_excl", "w_illum",
                     "lambda_grad"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0, got {getattr(self, name)}")


def _check_same_hw(*tensors: torch.Tensor) -> None:
    hw = {t.shape[-2:] for t in tensors}
    if len(hw) != 1:
        raise ValueError(f"spatial shapes differ: {sorted(tuple(s) for s in hw)}")


def loss_dec(d: torch.Tensor, g: torch.Tensor, i: torch.Tensor) -> torch.Tensor:
    """Mean absolute recomposition error |D + G - I|."""
    _check_same_hw(d, g, i)
    return (d + g - i).abs().mean()


def mask_confinement(p: torch.Tensor, m0: torch.Tensor) -> torch.Tensor:
    """Mean |P| outside the light-source mask."""
    _check_same_hw(p, m0[None] if m0.dim() == 2 else m0)
    return (p * (1.0 - m0)).abs().mean()


def gradient_exclusion(d: torch.Tensor, g: torch.Tensor) -> torch.Tensor:
    """Mean product of mean-normalized gradient magnitudes of the two layers,
    taken per axis and averaged over pixels and both axes; zero when either
    layer is gradient-flat, small when their edges avoid each other."""
    _check_same_hw(d, g)
    dx, dy = grad_pair(max_channel(d))
    gx, gy = grad_pair(max_channel(g))
    total = torch.zeros((), dtype=d.dtype, device=d.device)
    for md, mg in ((dx.abs(), gx.abs()), (dy.abs(), gy.abs())):
        nd = md / (md.mean() + _NORM_EPS)
        ng = mg / (mg.mean() + _NORM_EPS)
        total = total + (nd * ng).mean()
    return total / 2.0


def loss_gen(p: torch.Tensor, d: torch.Tensor, g: torch.Tensor, m0: torch.Tensor,
             w_excl: float = 0.01,
             confinement_enabled: bool = True,
             exclusion_enabled: bool = True) -> torch.Tensor:
    """Layer-generation prior: mask confinement of P plus w_excl times the
    gradient-exclusion term between D and G. Each sub-term can be disabled
    for ablation."""
    total = torch.zeros((), dtype=d.dtype, device=d.device)
    if confinement_enabled:
        total = total + mask_confinement(p, m0)
    if exclusion_enabled:
        total = total + w_excl * gradient_exclusion(d, g)
    return total


def fc_max_channel(image: torch.Tensor) -> torch.Tensor:
    """Per-pixel channel max (H, W); single-channel input is the identity."""
    return max_channel(image)


def retinex_reconstruction(r: torch.Tensor, l: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
    """First term of the retinex loss: |R x L - D|_1."""
    if l.dim() == 2:
        l = l[None]
    _check_same_hw(r, l, d)
    return (r * l - d).abs().mean()


def fc_consistency(r: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
    """Second term of the retinex loss: |Fc(D) - Fc(R)|_1 on channel maxima."""
    _check_same_hw(r, d)
    return (fc_max_channel(d) - fc_max_channel(r)).abs().mean()


def loss_retinex(r: torch.Tensor, l: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
    """|R x L - D|_1 plus the max-channel consistency term |Fc(D) - Fc(R)|_1."""
    if r.shape[0] != 3 or d.shape[0] != 3:
        raise ValueError("reflectance and target must be 3-channel")
    return retinex_reconstruction(r, l, d) + fc_consistency(r, d)


def illumination_guidance(l: torch.Tensor, d: torch.Tensor) -> torch.Tensor:
    """Quadratic pull of the illumination toward the target's channel maxima.

    Keeps the reflectance/illumination split away from its degenerate optimum
    (L identically one carrying no illumination); the quadratic form lets the
    consistency term push the equilibrium above the raw max-channel floor.
    """
    plane = l[0] if l.dim() == 3 else l
    _check_same_hw(plane[None], d)
    return ((plane - fc_max_channel(d)) ** 2).mean()


def loss_tex(l: torch.Tensor, r: torch.Tensor, lambda_grad: float = 10.0) -> torch.Tensor:
    """Edge-aware total variation of the illumination: |grad L| damped where
    the reflectance's max-channel has edges, mean over pixels and both axes."""
    plane_l = l[0] if l.dim() == 3 else l
    _check_same_hw(plane_l[None], r)
    fc_r = max_channel(r)
    lgx, lgy = grad_pair(plane_l)
    rgx, rgy = grad_pair(fc_r)
    tx = lgx.abs() * torch.exp(-lambda_grad * rgx.abs())
    ty = lgy.abs() * torch.exp(-lambda_grad * rgy.abs())
    return (tx.sum() + ty.sum()) / (tx.numel() + ty.numel())


def map_fidelity(p: torch.Tensor, apsf: torch.Tensor, d: torch.Tensor,
                 i: torch.Tensor) -> torch.Tensor:
    """Mean squared residual of the full recomposition |P (x) APSF + D - I|^2;
    the quadratic counterpart of loss_dec, kept as a diagnostic."""
    _check_same_hw(p, d, i)
    g = conv_same_reflect(p, apsf)
    return ((g + d - i) ** 2).mean()

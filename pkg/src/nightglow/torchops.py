"""Differentiable image ops shared by the optimization modules.

All functions follow the same conventions as the numpy core: true convolution
(not correlation), reflect-padded borders, channel-independent filtering.
"""
from __future__ import annotations

import torch
import torch.nn.functional as F

_FFT_MIN_SIDE = 13


def conv_same_reflect(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Convolve (C, H, W) with a 2D kernel, reflect padding, output (C, H, W).

    Small kernels run through conv2d directly; larger ones use an FFT product
    over the padded frame, whose circular wrap provably cannot reach the
    cropped window.
    """
    c, h, w = x.shape
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    if ph >= h or pw >= w:
        raise ValueError(f"kernel {kh}x{kw} too large for reflect padding of {h}x{w}")
    padded = F.pad(x.unsqueeze(0), (pw, pw, ph, ph), mode="reflect").squeeze(0)
    if max(kh, kw) < _FFT_MIN_SIDE:
        weight = kernel.flip(0).flip(1).expand(c, 1, kh, kw)
        return F.conv2d(padded.unsqueeze(0), weight, groups=c).squeeze(0)
    hf, wf = padded.shape[-2:]
    xf = torch.fft.rfft2(padded, s=(hf, wf))
    kf = torch.fft.rfft2(kernel, s=(hf, wf))
    full = torch.fft.irfft2(xf * kf, s=(hf, wf))
    return full[..., 2 * ph:2 * ph + h, 2 * pw:2 * pw + w]


def self_convolve(kernel: torch.Tensor, n: int) -> torch.Tensor:
    """Differentiable n-fold full self-convolution, renormalized against drift."""
    if n < 1:
        raise ValueError(f"self-convolution count must be >= 1, got {n}")
    out = kernel
    for _ in range(n - 1):
        s, ks = out.shape[-1], kernel.shape[-1]
        out = F.conv_transpose2d(out.view(1, 1, s, s), kernel.view(1, 1, ks, ks))
        out = out.view(s + ks - 1, s + ks - 1)
    return out / out.sum()


def max_channel(x: torch.Tensor) -> torch.Tensor:
    """Per-pixel max over channels of a (C, H, W) tensor -> (H, W)."""
    return x.max(dim=0).values if x.shape[0] > 1 else x[0]


def grad_pair(plane: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Forward differences of an (H, W) plane along x and y."""
    gx = plane[:, 1:] - plane[:, :-1]
    gy = plane[1:, :] - plane[:-1, :]
    return gx, gy



"""Atmospheric point spread function kernels.

Three producers live here: the truncated Legendre-series radiative-transfer
solution for multiply scattered light around a point source, a Monte-Carlo
photon walk that serves as its independent cross-check, and the n-fold
self-convolution used to grow a small learned kernel into an effective APSF.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre
from scipy.signal import convolve2d

from .grids import Kernel2D, ParameterError

_MC_CHUNK = 200_000
_MC_MAX_ROUNDS = 1000


class PhysicsError(ValueError):
    """The scattering series degenerated for the given parameters."""


@dataclass(frozen=True)
class ScatterParams:
    """Physical APSF parameters.

    q is the Henyey-Greenstein forward-scattering parameter in [0, 1); T the
    optical thickness (> 0) between source and observer. The kernel covers a
    pinhole window of `fov_deg` degrees across its full side; `include_direct`
    adds the attenuated unscattered beam exp(-T) to the center bin so the
    kernel describes the total point response rather than scattered light only.
    """

    q: float
    T: float
    radius: int
    series_order: int = 30
    fov_deg: float = 30.0
    include_direct: bool = True

    def __post_init__(self):
        if not 0.0 <= self.q < 1.0:
            raise ParameterError(f"forward-scattering q must lie in [0, 1), got {self.q}")
        if not self.T > 0.0:
            raise ParameterError(f"optical thickness T must be positive, got {self.T}")
        if self.series_order < 8:
            raise ParameterError(f"series_order must be >= 8, got {self.series_order}")
        if self.radius < 0:
            raise ParameterError(f"radius must be >= 0, got {self.radius}")
        if not 0.0 < self.fov_deg < 180.0:
            raise ParameterError(f"fov_deg must lie in (0, 180), got {self.fov_deg}")


def hg_phase(cos_alpha, q: float):
    """Henyey-Greenstein phase density (1-q^2) / (4 pi (1 + q^2 - 2 q cos)^(3/2)).

    Normalized so the integral over the unit sphere equals 1.
    """
    if not 0.0 <= q < 1.0:
        raise ParameterError(f"forward-scattering q must lie in [0, 1), got {q}")
    cos_alpha = np.asarray(cos_alpha, dtype=np.float64)
    if np.any(cos_alpha < -1.0) or np.any(cos_alpha > 1.0):
        raise ParameterError("cos_alpha must lie in [-1, 1]")
    denom = (1.0 + q * q - 2.0 * q * cos_alpha) ** 1.5
    out = (1.0 - q * q) / (4.0 * math.pi * denom)
    return float(out) if out.ndim == 0 else out


def _series_coefficients(q: float, T: float, order: int) -> np.ndarray:
    """Legendre coefficients c_m = g_m + g_{m+1} of the multiple-scattering
    radiance I(T, mu), with g_m = exp(-beta_m T - (m+1) ln T),
    beta_m = (2m+1)/m (1 - q^(m-1)), and g_0 = 0.

    The expansion is asymptotic in T: for T < 1 the g_m eventually grow, so the
    tail is cut at the smallest term (optimal truncation). For T >= 1 the terms
    decay monotonically and the full requested order is kept.
    """
    g = np.zeros(order + 2)
    for m in range(1, order + 2):
        beta = (2 * m + 1) / m * (1.0 - q ** (m - 1))
        g[m] = math.exp(-beta * T - (m + 1) * math.log(T))
    stop = order + 2
    for m in range(3, order + 2):
        if g[m] > g[m - 1]:
            stop = m
            break
    g = g[:stop]
    return np.array([g[m] + (g[m + 1] if m + 1 < len(g) else 0.0) for m in range(len(g))])


def apsf_analytic(params: ScatterParams) -> Kernel2D:
    """Evaluate the scattering series on a pinhole pixel grid as a simplex kernel.

    Pixels map to directions gnomonically (pixel radius `radius` sits at
    fov/2), the series is weighted by per-pixel solid angle and normalized
    against its full-sphere integral, and the attenuated direct beam is added
    at the physical ratio exp(-T) : (1 - exp(-T)) before the windowed kernel
    is renormalized onto the simplex.
    """
    r = params.radius
    if r == 0:
        return Kernel2D([[1.0]], provenance=_analytic_provenance(params))
    coef = _series_coefficients(params.q, params.T, params.series_order)

    tan_half = math.tan(math.radians(params.fov_deg) / 2.0)
    axis = np.arange(-r, r + 1, dtype=np.float64) / r * tan_half
    uu, vv = np.meshgrid(axis, axis)
    mu = 1.0 / np.sqrt(1.0 + uu ** 2 + vv ** 2)
    vals = np.clip(legendre.legval(mu, coef), 0.0, None)
    if not vals.sum() > 0.0:
        raise PhysicsError(
            f"scattering series degenerated (all values <= 0) for q={params.q}, T={params.T}")
    # solid angle of a gnomonic pixel: dOmega = du dv (1 + u^2 + v^2)^(-3/2)
    omega = (tan_half / r) ** 2 * mu ** 3
    windowed = vals * omega

    nodes, gauss_w = np.polynomial.legendre.leggauss(256)
    sphere_total = 2.0 * math.pi * float(
        np.sum(gauss_w * np.clip(legendre.legval(nodes, coef), 0.0, None)))
    if not sphere_total > 0.0:
        raise PhysicsError(
            f"scattering series has no positive sphere integral for q={params.q}, T={params.T}")

    direct = math.exp(-params.T)
    kernel = windowed / sphere_total * (1.0 - direct)
    if params.include_direct:
        kernel[r, r] += direct
    return Kernel2D.normalized(kernel, provenance=_analytic_provenance(params))


def _analytic_provenance(params: ScatterParams) -> str:
    return (f"analytic(q={params.q}, T={params.T}, radius={params.radius}, "
            f"fov={params.fov_deg}, direct={params.include_direct})")


def mc_scatter(params: ScatterParams, photons: int, seed: int) -> Kernel2D:
    """Monte-Carlo photon walk through a slab of optical thickness T.

    Photons start at the source heading toward the observer plane at unit
    depth; free path lengths are exponential with rate T, scattering deflects
    by Henyey-Greenstein angles, and forward exit positions are binned onto
    the same gnomonic pixel grid the analytic kernel uses. Backward exits
    and photons still walking after the round limit are dropped before the
    simplex normalization. Deterministic for a given seed: photon chunks of
    fixed size draw from independently spawned child generators and integer
    bin counts merge by exact addition.
    """
    if photons < 10 ** 5:
        raise ParameterError(f"photons must be >= 1e5, got {photons}")
    r = params.radius
    side = 2 * r + 1
    counts = np.zeros((side, side), dtype=np.int64)
    children = np.random.SeedSequence(seed).spawn(math.ceil(photons / _MC_CHUNK))
    remaining = photons
    for child in children:
        n = min(_MC_CHUNK, remaining)
        remaining -= n
        counts += _walk_chunk(params, n, np.random.Generator(np.random.PCG64(child)))
    total = counts.sum()
    if total == 0:
        raise PhysicsError(
            f"no photons reached the observer window for q={params.q}, T={params.T}")
    return Kernel2D(counts / total, provenance=(
        f"mc(q={params.q}, T={params.T}, radius={params.radius}, "
        f"photons={photons}, seed={seed})"))


def _walk_chunk(params: ScatterParams, n: int, rng: np.random.Generator) -> np.ndarray:
    r = params.radius
    side = 2 * r + 1
    tan_half = math.tan(math.radians(params.fov_deg) / 2.0)
    # lateral extent of one pixel at unit depth; degenerate 1x1 grid bins all
    scale = tan_half / r if r > 0 else None
    counts = np.zeros((side, side), dtype=np.int64)

    pos = np.zeros((n, 3))
    dirs = np.zeros((n, 3))
    dirs[:, 2] = 1.0
    alive = np.ones(n, dtype=bool)
    q = params.q
    for _ in range(_MC_MAX_ROUNDS):
        idx = np.nonzero(alive)[0]
        if idx.size == 0:
            break
        step = rng.exponential(1.0 / params.T, size=idx.size)
        new = pos[idx] + step[:, None] * dirs[idx]

        exited = new[:, 2] >= 1.0
        if exited.any():
            sel = idx[exited]
            t = (1.0 - pos[sel, 2]) / dirs[sel, 2]
            hit = pos[sel, :2] + t[:, None] * dirs[sel, :2]
            if scale is None:
                counts[0, 0] += sel.size
            else:
                px = np.rint(hit[:, 0] / scale).astype(np.int64)
                py = np.rint(hit[:, 1] / scale).astype(np.int64)
                inside = (np.abs(px) <= r) & (np.abs(py) <= r)
                np.add.at(counts, (py[inside] + r, px[inside] + r), 1)
            alive[sel] = False

        lost = new[:, 2] < 0.0
        if lost.any():
            alive[idx[lost]] = False

        walking = ~exited & ~lost
        sel = idx[walking]
        if sel.size == 0:
            continue
        pos[sel] = new[walking]

        u = rng.random(sel.size)
        if q > 1e-12:
            ct = (1.0 + q * q - ((1.0 - q * q) / (1.0 - q + 2.0 * q * u)) ** 2) / (2.0 * q)
            ct = np.clip(ct, -1.0, 1.0)
        else:
            ct = 2.0 * u - 1.0
        st = np.sqrt(1.0 - ct ** 2)
        psi = rng.random(sel.size) * 2.0 * math.pi
        cp, sp = np.cos(psi), np.sin(psi)

        dx, dy, dz = dirs[sel, 0], dirs[sel, 1], dirs[sel, 2]
        sz = np.sqrt(np.clip(1.0 - dz ** 2, 0.0, None))
        straight = sz < 1e-9
        safe_sz = np.where(straight, 1.0, sz)
        nx = np.where(straight, st * cp, ct * dx + st * (dx * dz * cp - dy * sp) / safe_sz)
        ny = np.where(straight, st * sp, ct * dy + st * (dy * dz * cp + dx * sp) / safe_sz)
        nz = np.where(straight, np.sign(dz) * ct, ct * dz - st * cp * sz)
        norm = np.sqrt(nx ** 2 + ny ** 2 + nz ** 2)
        dirs[sel, 0] = nx / norm
        dirs[sel, 1] = ny / norm
        dirs[sel, 2] = nz / norm
    return counts


def self_convolve(k: Kernel2D, n: int) -> Kernel2D:
    """n-fold convolution k * k * ... * k with full support.

    The output side is n*(side-1)+1; weights are renormalized to absorb float
    drift so the result is an exact simplex member.
    """
    if n < 1:
        raise ParameterError(f"self-convolution count must be >= 1, got {n}")
    out = k.weights
    for _ in range(n - 1):
        out = convolve2d(out, k.weights, mode="full")
    return Kernel2D.normalized(out, provenance=f"selfconv(n={n}) of [{k.provenance}]")


def kernel_radial_profile(kernel: Kernel2D) -> np.ndarray:
    """Mean kernel weight over integer-radius annuli, index 0 = center."""
    r = kernel.side // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    ring = np.rint(np.sqrt(xx ** 2 + yy ** 2)).astype(int)
    return np.array([kernel.weights[ring == i].mean() for i in range(r + 1)])


def kernel_second_moment(kernel: Kernel2D) -> float:
    """Weighted mean squared pixel radius, a scale measure of kernel spread."""
    r = kernel.side // 2
    yy, xx = np.mgrid[-r:r + 1, -r:r + 1]
    return float((kernel.weights * (xx ** 2 + yy ** 2)).sum())

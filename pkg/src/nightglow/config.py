"""Run configuration: one JSON document with optional sections, strict about
unknown keys so typos surface as errors naming the offending path."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .generators import ImageGenSpec, KernelGenSpec
from .grids import ParameterError
from .lbdn import LbdnConfig
from .lightmask import MaskConfig
from .losses import LossWeights
from .metrics import EdgeConfig
from .rem import RemConfig
from .synth import SourceElement, SourceSpec


class ConfigError(ValueError):
    """The configuration document is malformed."""


@dataclass(frozen=True)
class SynthConfig:
    darken: float = 0.3
    q: float = 0.9
    T: float = 1.2
    radius: int = 16
    series_order: int = 30
    fov_deg: float = 30.0
    include_direct: bool = True
    sources: SourceSpec | None = None  # default: one disc at the image center

    def __post_init__(self):
        if not 0.0 < self.darken <= 1.0:
            raise ConfigError(f"synth.darken must lie in (0, 1], got {self.darken}")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for every pipeline stage plus the global seed."""

    seed: int = 0
    mask: MaskConfig = field(default_factory=MaskConfig)
    image_gen: ImageGenSpec = field(default_factory=ImageGenSpec)
    kernel_gen: KernelGenSpec = field(default_factory=KernelGenSpec)
    lbdn: LbdnConfig = field(default_factory=LbdnConfig)
    rem: RemConfig = field(default_factory=RemConfig)
    metrics: EdgeConfig = field(default_factory=EdgeConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    raw: dict = field(default_factory=dict, compare=False)


def _check_keys(section: dict, path: str, allowed: set[str]) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"unknown configuration key: {path}{key}")


def _pick(section: dict, defaults, path: str, fields: dict[str, type]):
    _check_keys(section, path, set(fields))
    kwargs = {}
    for key, caster in fields.items():
        if key in section:
            try:
                kwargs[key] = caster(section[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {path}{key}: {exc}") from exc
    try:
        return replace(defaults, **kwargs) if kwargs else defaults
    except (ParameterError, ValueError) as exc:
        raise ConfigError(f"invalid section {path.rstrip('.')}: {exc}") from exc


def _parse_sources(raw_list, path: str) -> SourceSpec:
    elements = []
    for i, raw in enumerate(raw_list):
        p = f"{path}[{i}]."
        _check_keys(raw, p, {"shape", "position", "size", "intensity", "points", "count"})
        try:
            elements.append(SourceElement(
                shape=raw.get("shape", "disc"),
                position=tuple(raw.get("position", (0.0, 0.0))),
                size=float(raw.get("size", 1.0)),
                intensity=float(raw.get("intensity", 1.0)),
                points=tuple(tuple(pt) for pt in raw["points"]) if "points" in raw else None,
                count=int(raw.get("count", 8))))
        except ValueError as exc:
            raise ConfigError(f"invalid source {path}[{i}]: {exc}") from exc
    return SourceSpec(tuple(elements))


def parse_config(document: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON document, rejecting unknown keys."""
    if not isinstance(document, dict):
        raise ConfigError("configuration root must be a JSON object")
    _check_keys(document, "", {"seed", "mask", "generators", "lbdn", "rem", "metrics", "synth"})

    seed = int(document.get("seed", 0))
    mask = _pick(document.get("mask", {}), MaskConfig(), "mask.", {
        "percentile": float, "absolute_floor": float, "dilate_radius": int, "min_area": int})

    gens = document.get("generators", {})
    _check_keys(gens, "generators.", {"image", "kernel"})
    image_gen = _pick(gens.get("image", {}), ImageGenSpec(), "generators.image.", {
        "depth": int, "widths": tuple, "skip_width": int, "output_channels": int,
        "noise_channels": int, "noise_perturb_std": float,
        "upsample": str, "output_activation": str})
    kernel_gen = _pick(gens.get("kernel", {}), KernelGenSpec(), "generators.kernel.", {
        "noise_dim": int, "hidden_dim": int, "kernel_side": int})

    lbdn_section = dict(document.get("lbdn", {}))
    lbdn_weights = _pick(lbdn_section.pop("weights", {}), LossWeights(), "lbdn.weights.", {
        "w_dec": float, "w_gen": float, "w_retinex": float, "w_tex": float,
        "w_excl": float, "lambda_grad": float})
    lbdn = _pick(lbdn_section, LbdnConfig(), "lbdn.", {
        "n_selfconv": int, "steps": int, "lr_image_gens": float, "lr_kernel_gen": float,
        "log_every": int, "apg_enabled": bool, "mask_prior_enabled": bool, "threads": int})
    lbdn = replace(lbdn, seed=seed, mask=mask, weights=lbdn_weights,
                   image_gen=image_gen, kernel_gen=kernel_gen)

    rem_section = dict(document.get("rem", {}))
    rem_weights = _pick(rem_section.pop("weights", {}), lbdn_weights, "rem.weights.", {
        "w_dec": float, "w_gen": float, "w_retinex": float, "w_tex": float,
        "w_excl": float, "lambda_grad": float})
    rem = _pick(rem_section, RemConfig(), "rem.", {
        "steps": int, "lr": float, "gamma": float,
        "tex_enabled": bool, "fc_enabled": bool, "threads": int})
    rem = replace(rem, seed=seed, weights=rem_weights, trunk=image_gen)

    metrics_cfg = _pick(document.get("metrics", {}), EdgeConfig(), "metrics.", {
        "visibility_threshold": float})

    synth_section = dict(document.get("synth", {}))
    sources = None
    if "sources" in synth_section:
        sources = _parse_sources(synth_section.pop("sources"), "synth.sources")
    synth = _pick(synth_section, SynthConfig(), "synth.", {
        "darken": float, "q": float, "T": float, "radius": int,
        "series_order": int, "fov_deg": float, "include_direct": bool})
    synth = replace(synth, sources=sources)

    return RunConfig(seed=seed, mask=mask, image_gen=image_gen, kernel_gen=kernel_gen,
                     lbdn=lbdn, rem=rem, metrics=metrics_cfg, synth=synth,
                     raw=document)


def load_config(path) -> RunConfig:
    try:
        document = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"configuration file {path} is not valid JSON: {exc}") from exc
    return parse_config(document)


def reseeded(cfg: RunConfig, seed: int) -> RunConfig:
    """A copy of the configuration with the global seed replaced everywhere."""
    return RunConfig(
        seed=seed, mask=cfg.mask, image_gen=cfg.image_gen, kernel_gen=cfg.kernel_gen,
        lbdn=replace(cfg.lbdn, seed=seed), rem=replace(cfg.rem, seed=seed),
        metrics=cfg.metrics, synth=cfg.synth, raw=cfg.raw)

"""Command-line entry point.

Exit codes: 0 success, 2 unreadable/unwritable files, 3 invalid configuration,
4 optimization failure. The global seed resolves as --seed, then the
NIGHTGLOW_SEED environment variable, then the configuration document.
"""
from __future__ import annotations

import functools
import json
import os
import sys
from pathlib import Path

import click

from .config import ConfigError, RunConfig, load_config, reseeded
from .generators import OptimizationError
from .grids import ParameterError, PixelGrid
from .imageio import ImageIOError, load_png
from .lbdn import NoLightSourceError
from .runs import (ABLATION_CELLS, ablation_from_dir, eval_row, run_enhance,
                   run_pipeline, run_suppress, write_ablation_csv, write_eval_csv,
                   write_report)
from .synth import ScatterParams, SourceElement, SourceSpec, save_scene, synth_scene

EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_OPTIMIZATION = 4


def _resolve_config(config_path, seed) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    if seed is None:
        env = os.environ.get("NIGHTGLOW_SEED")
        if env is not None:
            try:
                seed = int(env)
            except ValueError as exc:
                raise ConfigError(f"NIGHTGLOW_SEED must be an integer, got {env!r}") from exc
    if seed is not None:
        cfg = reseeded(cfg, int(seed))
    return cfg


def _load_image(path) -> PixelGrid:
    try:
        return load_png(path)
    except (ValueError, ParameterError) as exc:
        raise ImageIOError(f"{path}: {exc}") from exc


def handles_failures(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except (ImageIOError, FileNotFoundError, PermissionError, IsADirectoryError) as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except NoLightSourceError as exc:
            click.echo(f"optimization aborted: {exc}", err=True)
            sys.exit(EXIT_OPTIMIZATION)
        except OptimizationError as exc:
            click.echo(f"optimization failed: {exc}", err=True)
            sys.exit(EXIT_OPTIMIZATION)
    return wrapper


def common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(), default=None,
                      help="JSON configuration document.")(fn)
    fn = click.option("--out", "out_dir", type=click.Path(), required=True,
                      help="Output directory (created if missing).")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Global seed (overrides NIGHTGLOW_SEED and the config).")(fn)
    return fn


@click.group()
def main():
    """Synthesize, suppress, and evaluate nighttime glow."""


@main.command("synth")
@click.argument("clean_png", type=click.Path())
@common_options
@handles_failures
def cmd_synth(clean_png, config_path, out_dir, seed):
    """Render a ground-truthed degraded scene from a clean image."""
    cfg = _resolve_config(config_path, seed)
    clean = _load_image(clean_png)
    sources = cfg.synth.sources or SourceSpec((SourceElement(
        shape="disc", position=(clean.height / 2, clean.width / 2),
        size=4.0, intensity=1.0),))
    params = ScatterParams(q=cfg.synth.q, T=cfg.synth.T, radius=cfg.synth.radius,
                           series_order=cfg.synth.series_order, fov_deg=cfg.synth.fov_deg,
                           include_direct=cfg.synth.include_direct)
    scene = synth_scene(clean, sources, params, darken=cfg.synth.darken, seed=cfg.seed)
    save_scene(scene, out_dir)
    write_report(out_dir, {"command": "synth", "seed": cfg.seed, "meta": scene.meta})
    click.echo(f"scene written to {out_dir}")


@main.command("suppress")
@click.argument("input_png", type=click.Path())
@click.option("--clean", "clean_png", type=click.Path(), default=None,
              help="Optional clean reference for PSNR reporting.")
@common_options
@handles_failures
def cmd_suppress(input_png, clean_png, config_path, out_dir, seed):
    """Decompose a degraded image into direct transmission and glow."""
    cfg = _resolve_config(config_path, seed)
    image = _load_image(input_png)
    clean = _load_image(clean_png) if clean_png else None
    result = run_suppress(image, cfg, out_dir, clean=clean)
    click.echo(f"suppression done: residual={result.residual:.4f} -> {out_dir}")


@main.command("enhance")
@click.argument("direct_png", type=click.Path())
@common_options
@handles_failures
def cmd_enhance(direct_png, config_path, out_dir, seed):
    """Brighten a direct-transmission image via retinex decomposition."""
    cfg = _resolve_config(config_path, seed)
    direct = _load_image(direct_png)
    result = run_enhance(direct, cfg, out_dir)
    click.echo(f"enhancement done: final loss={result.loss_curve[-1]:.4f} -> {out_dir}")


@main.command("pipeline")
@click.argument("input_png", type=click.Path())
@click.option("--clean", "clean_png", type=click.Path(), default=None,
              help="Optional clean reference for PSNR reporting.")
@common_options
@handles_failures
def cmd_pipeline(input_png, clean_png, config_path, out_dir, seed):
    """Suppression followed by enhancement (falls back to enhancement alone
    when no light source is found)."""
    cfg = _resolve_config(config_path, seed)
    image = _load_image(input_png)
    clean = _load_image(clean_png) if clean_png else None
    lbdn_result, _ = run_pipeline(image, cfg, out_dir, clean=clean)
    note = "" if lbdn_result is not None else " (no light source: suppression skipped)"
    click.echo(f"pipeline done{note} -> {out_dir}")


@main.command("eval")
@click.argument("before_png", type=click.Path())
@click.argument("after_png", type=click.Path())
@click.argument("clean_png", type=click.Path(), required=False)
@common_options
@handles_failures
def cmd_eval(before_png, after_png, clean_png, config_path, out_dir, seed):
    """Blind contrast metrics between two images (plus PSNR given a reference)."""
    cfg = _resolve_config(config_path, seed)
    before = _load_image(before_png)
    after = _load_image(after_png)
    clean = _load_image(clean_png) if clean_png else None
    row = eval_row(before, after, cfg.metrics, clean=clean,
                   before_name=str(before_png), after_name=str(after_png))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_eval_csv([row], out / "eval.csv")
    click.echo(json.dumps(row, indent=2, sort_keys=True))


@main.command("ablate")
@click.argument("scene_dir", type=click.Path())
@click.option("--reps", type=int, default=3, show_default=True,
              help="Seeded repetitions per grid cell.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes across grid cells.")
@common_options
@handles_failures
def cmd_ablate(scene_dir, reps, jobs, config_path, out_dir, seed):
    """Run the ablation grid (n=1..5, APG, LMP, L_Tex, F_c) on a stored scene."""
    cfg = _resolve_config(config_path, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        rows = _parallel_ablation(scene_dir, cfg, reps, jobs)
    else:
        rows = ablation_from_dir(
            scene_dir, cfg, reps=reps,
            progress=lambda row: click.echo(
                f"  {row['cell']} rep {row['rep']}: gain={row['psnr_gain']:+.2f} dB"))
    write_ablation_csv(rows, out / "ablation.csv")
    write_report(out, {"command": "ablate", "seed": cfg.seed, "reps": reps,
                       "cells": list(ABLATION_CELLS)})
    click.echo(f"ablation grid written to {out / 'ablation.csv'}")


def _parallel_ablation(scene_dir, cfg: RunConfig, reps: int, jobs: int) -> list[dict]:
    # one task per (cell, rep); exactness of the per-cell seed schedule makes
    # recomputing shared suppression results in separate workers harmless
    from concurrent.futures import ProcessPoolExecutor

    tasks = [(str(scene_dir), cfg.raw, cfg.seed, cell, rep)
             for rep in range(reps) for cell in ABLATION_CELLS]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        rows = list(pool.map(_ablation_task, tasks))
    order = {cell: i for i, cell in enumerate(ABLATION_CELLS)}
    return sorted(rows, key=lambda r: (r["rep"], order[r["cell"]]))


def _ablation_task(args) -> dict:
    scene_dir, raw_config, seed, cell, rep = args
    from .config import parse_config
    from .runs import run_ablation_cell
    from .synth import load_scene

    cfg = reseeded(parse_config(raw_config), seed)
    return run_ablation_cell(load_scene(scene_dir), cfg, cell, rep)


if __name__ == "__main__":
    main()

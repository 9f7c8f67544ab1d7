"""Run orchestration: stage artifact directories, reproducible reports with
file checksums, metric rows, and the ablation grid."""
from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import lbdn as lbdn_mod
from . import rem as rem_mod
from .config import RunConfig
from .grids import PixelGrid
from .heatmap import render_heatmap
from .imageio import save_png
from .lbdn import LbdnConfig, LbdnResult, NoLightSourceError, save_lbdn_result, suppress
from .metrics import EdgeConfig, MetricValue, metric_e, metric_r, metric_sigma, psnr
from .rem import RemConfig, RemResult, enhance, save_rem_result
from .synth import SyntheticScene, load_scene

ABLATION_CELLS = (
    "n=1", "n=2", "full", "n=4", "n=5", "no_apg", "no_lmp", "no_ltex", "no_fc")


def file_checksums(root) -> dict[str, str]:
    root = Path(root)
    out = {}
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        if path.name == "report.json" and path.parent == root:
            continue
        out[path.relative_to(root).as_posix()] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


def write_report(out_dir, payload: dict) -> None:
    payload = dict(payload)
    payload["files"] = file_checksums(out_dir)
    (Path(out_dir) / "report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _metric_entry(value: MetricValue) -> dict:
    v = value.value
    entry = {"value": None if isinstance(v, float) and not math.isfinite(v) else v}
    if isinstance(v, float) and not math.isfinite(v):
        entry["raw"] = repr(v)
    if value.flag:
        entry["flag"] = value.flag
    return entry


def run_suppress(image: PixelGrid, cfg: RunConfig, out_dir,
                 clean: PixelGrid | None = None) -> LbdnResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = suppress(image, cfg.lbdn)
    elapsed = time.perf_counter() - t0
    save_lbdn_result(result, out)
    save_png(out / "heat_input.png", render_heatmap(image))
    save_png(out / "heat_D.png", render_heatmap(result.D))
    save_png(out / "heat_G.png", render_heatmap(result.G))
    payload = {
        "command": "suppress",
        "seed": cfg.seed,
        "config": lbdn_mod.config_echo(cfg.lbdn),
        "losses": {"lbdn_final": float(result.loss_curve[-1]),
                   "lbdn_residual": result.residual},
        "timings": {"lbdn_seconds": elapsed},
    }
    if clean is not None:
        payload["psnr"] = {
            "input_vs_clean": _metric_entry(psnr(image, clean)),
            "D_vs_clean": _metric_entry(psnr(result.D, clean)),
            "gain_db": psnr(result.D, clean).value - psnr(image, clean).value,
        }
    write_report(out, payload)
    return result


def run_enhance(direct: PixelGrid, cfg: RunConfig, out_dir) -> RemResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = enhance(direct, cfg.rem)
    elapsed = time.perf_counter() - t0
    save_rem_result(result, out)
    save_png(out / "heat_input.png", render_heatmap(direct))
    save_png(out / "heat_enhanced.png", render_heatmap(result.enhanced))
    write_report(out, {
        "command": "enhance",
        "seed": cfg.seed,
        "config": rem_mod.config_echo(cfg.rem),
        "losses": {"rem_final": float(result.loss_curve[-1])},
        "timings": {"rem_seconds": elapsed},
    })
    return result


def run_pipeline(image: PixelGrid, cfg: RunConfig, out_dir,
                 clean: PixelGrid | None = None) -> tuple[LbdnResult | None, RemResult]:
    """Suppression followed by enhancement of the recovered transmission.

    An empty light mask downgrades the run: suppression is skipped, the input
    goes straight to enhancement, and the report records the downgrade.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload: dict = {"command": "pipeline", "seed": cfg.seed,
                     "config": {"lbdn": lbdn_mod.config_echo(cfg.lbdn),
                                "rem": rem_mod.config_echo(cfg.rem)},
                     "timings": {}, "losses": {}}
    lbdn_result = None
    t0 = time.perf_counter()
    try:
        lbdn_result = suppress(image, cfg.lbdn)
    except NoLightSourceError as exc:
        payload["downgrade"] = f"suppression skipped: {exc}"
        direct = image
    else:
        payload["timings"]["lbdn_seconds"] = time.perf_counter() - t0
        payload["losses"]["lbdn_final"] = float(lbdn_result.loss_curve[-1])
        payload["losses"]["lbdn_residual"] = lbdn_result.residual
        save_lbdn_result(lbdn_result, out / "lbdn")
        direct = lbdn_result.D

    t0 = time.perf_counter()
    rem_result = enhance(direct, cfg.rem)
    payload["timings"]["rem_seconds"] = time.perf_counter() - t0
    payload["losses"]["rem_final"] = float(rem_result.loss_curve[-1])
    save_rem_result(rem_result, out / "rem")

    heat = out / "heatmaps"
    heat.mkdir(exist_ok=True)
    save_png(heat / "input.png", render_heatmap(image))
    if lbdn_result is not None:
        save_png(heat / "D.png", render_heatmap(lbdn_result.D))
        save_png(heat / "G.png", render_heatmap(lbdn_result.G))
    save_png(heat / "enhanced.png", render_heatmap(rem_result.enhanced))

    if clean is not None and lbdn_result is not None:
        gain = psnr(lbdn_result.D, clean).value - psnr(image, clean).value
        payload["psnr"] = {
            "input_vs_clean": _metric_entry(psnr(image, clean)),
            "D_vs_clean": _metric_entry(psnr(lbdn_result.D, clean)),
            "gain_db": gain,
        }
    write_report(out, payload)
    return lbdn_result, rem_result


EVAL_COLUMNS = ("before", "after", "e", "e_flag", "r", "r_flag", "sigma",
                "psnr_before_vs_clean", "psnr_after_vs_clean", "clean_flag")


def eval_row(before: PixelGrid, after: PixelGrid, cfg: EdgeConfig,
             clean: PixelGrid | None = None,
             before_name: str = "before", after_name: str = "after") -> dict:
    e = metric_e(before, after, cfg)
    r = metric_r(before, after, cfg)
    sigma = metric_sigma(before, after)
    row = {
        "before": before_name, "after": after_name,
        "e": e.value, "e_flag": e.flag or "",
        "r": r.value, "r_flag": r.flag or "",
        "sigma": sigma.value,
        "psnr_before_vs_clean": "", "psnr_after_vs_clean": "", "clean_flag": "",
    }
    if clean is None:
        row["clean_flag"] = "no_reference"
    else:
        row["psnr_before_vs_clean"] = psnr(before, clean).value
        row["psnr_after_vs_clean"] = psnr(after, clean).value
    return row


def write_eval_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=EVAL_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def ablation_cell_configs(cfg: RunConfig, cell: str) -> tuple[LbdnConfig, RemConfig]:
    """Stage configurations for one ablation cell; `full` is the n=3 model."""
    lbdn_cfg, rem_cfg = cfg.lbdn, cfg.rem
    if cell.startswith("n="):
        lbdn_cfg = replace(lbdn_cfg, n_selfconv=int(cell[2:]))
    elif cell == "no_apg":
        lbdn_cfg = replace(lbdn_cfg, apg_enabled=False)
    elif cell == "no_lmp":
        lbdn_cfg = replace(lbdn_cfg, mask_prior_enabled=False)
    elif cell == "no_ltex":
        rem_cfg = replace(rem_cfg, tex_enabled=False)
    elif cell == "no_fc":
        rem_cfg = replace(rem_cfg, fc_enabled=False)
    elif cell != "full":
        raise ValueError(f"unknown ablation cell {cell!r}")
    return lbdn_cfg, rem_cfg


def ablation_seed(global_seed: int, cell: str, rep: int) -> int:
    """Fixed per-cell seed schedule derived from the global seed; cells that
    share the same suppression stage share seeds so cached results agree."""
    return int(np.random.SeedSequence(
        [global_seed & 0xFFFFFFFF, ABLATION_CELLS.index(cell), rep]).generate_state(1)[0])


ABLATE_COLUMNS = ("cell", "rep", "seed", "psnr_input", "psnr_D", "psnr_gain",
                  "residual", "rem_final_loss", "e", "r", "sigma")


def run_ablation_cell(scene: SyntheticScene, cfg: RunConfig, cell: str, rep: int,
                      lbdn_cache: dict | None = None) -> dict:
    """One grid cell at one seeded repetition.

    Cells that only change the enhancement stage (no_ltex, no_fc) share the
    full model's suppression seed, so a cache keyed on (rep, lbdn-cell) can
    reuse the identical deterministic suppression result.
    """
    degraded, clean = scene.degraded, scene.clean_direct
    lbdn_cfg, rem_cfg = ablation_cell_configs(cfg, cell)
    rem_only = cell in ("no_ltex", "no_fc")
    lbdn_cell = "full" if rem_only or cell == "full" else cell
    seed = ablation_seed(cfg.seed, lbdn_cell, rep)
    lbdn_cfg = replace(lbdn_cfg, seed=seed)
    rem_cfg = replace(rem_cfg, seed=seed)

    cache_key = (rep, lbdn_cell)
    if lbdn_cache is not None and cache_key in lbdn_cache:
        result = lbdn_cache[cache_key]
    else:
        result = suppress(degraded, lbdn_cfg)
        if lbdn_cache is not None:
            lbdn_cache[cache_key] = result
    rem_result = enhance(result.D, rem_cfg)

    psnr_in = psnr(degraded, clean).value
    return {
        "cell": cell, "rep": rep, "seed": seed,
        "psnr_input": psnr_in,
        "psnr_D": psnr(result.D, clean).value,
        "psnr_gain": psnr(result.D, clean).value - psnr_in,
        "residual": result.residual,
        "rem_final_loss": float(rem_result.loss_curve[-1]),
        "e": metric_e(degraded, rem_result.enhanced, cfg.metrics).value,
        "r": metric_r(degraded, rem_result.enhanced, cfg.metrics).value,
        "sigma": metric_sigma(degraded, rem_result.enhanced).value,
    }


def run_ablation(scene: SyntheticScene, cfg: RunConfig, reps: int = 3,
                 cells: tuple[str, ...] = ABLATION_CELLS,
                 progress=None) -> list[dict]:
    """Run the ablation grid on a stored scene; one row per cell per rep."""
    lbdn_cache: dict[tuple, LbdnResult] = {}
    rows = []
    for rep in range(reps):
        for cell in cells:
            row = run_ablation_cell(scene, cfg, cell, rep, lbdn_cache=lbdn_cache)
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def write_ablation_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATE_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def ablation_from_dir(scene_dir, cfg: RunConfig, reps: int = 3, progress=None) -> list[dict]:
    return run_ablation(load_scene(scene_dir), cfg, reps=reps, progress=progress)

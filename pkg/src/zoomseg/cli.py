"""Command-line interface.

Subcommands: run (refine one image), eval (score predictions against
ground truth), ablate (sweep scoring strategies), tile-plan (inspect the
window grids), fixtures (generate a synthetic dataset). The default config
path can come from the ZOOMSEG_CONFIG environment variable.

Exit codes: 0 ok, 2 config error, 3 backend or protocol error, 4 I/O error.
"""
from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import (
    RunManifest,
    build_backend,
    build_combiner,
    config_digest,
    parse_config,
)
from .errors import BackendFailure, ConfigError, EmptyInput, ZoomSegError
from .fixtures import dataset_pairs, make_fixtures
from .maps import LabelMap, ProbMap, argmax_labels
from .metrics import ConfusionMatrix, accumulate, iou_cdf, iou_per_class, miou
from .pipeline import PipelineConfig, run_pipeline
from .tensorio import load_image, load_labels, load_tensor, save_labels, save_tensor
from .tiling import windows_for_scale
from .uncertainty import ScoreStrategy

EXIT_CONFIG = 2
EXIT_BACKEND = 3
EXIT_IO = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    """Translate package errors into the documented exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as e:
            _fail(EXIT_CONFIG, str(e))
        except BackendFailure as e:
            _fail(EXIT_BACKEND, str(e))
        except (EmptyInput, ZoomSegError) as e:
            _fail(EXIT_IO, str(e))
        except OSError as e:
            _fail(EXIT_IO, str(e))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


config_option = click.option(
    "--config",
    "config_path",
    envvar="ZOOMSEG_CONFIG",
    required=True,
    type=click.Path(exists=True, dir_okay=False),
    help="YAML config file (or set ZOOMSEG_CONFIG).",
)


@click.group()
@click.version_option(version=__version__)
def main():
    """Progressive multi-scale segmentation refinement."""


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              help="Ground-truth PNG; required by the oracle backend, otherwise used for per-stage mIoU.")
@config_option
@click.option("--out", "out_dir", default="out", type=click.Path(file_okay=False))
@click.option("--save-stages", "save_stages", type=click.Path(file_okay=False),
              help="Also write every intermediate stage map into this directory.")
@click.option("--fast/--no-fast", default=None,
              help="Force fast mode on/off regardless of the config.")
@_guarded
def run(image_path, labels_path, config_path, out_dir, save_stages, fast):
    """Refine one image and write the final map, labels, and reports."""
    cfg = parse_config(config_path)
    if fast is False:
        cfg = _replace_cfg(cfg, fast=None)
    elif fast is True and cfg.fast is None:
        raise ConfigError("--fast requested but the config has no `fast` section")

    image = load_image(image_path)
    gt = load_labels(labels_path) if labels_path else None
    backend = build_backend(cfg, gt)
    combiner = build_combiner(cfg)
    try:
        maps, reports = run_pipeline(image, cfg, backend, combiner, gt=gt)
    finally:
        backend.close()
        combiner.close()

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(image_path).stem
    final = maps[-1]
    # <stem>.mgt pairs with <stem>.png ground truth in `eval` by stem.
    mgt_path = out / f"{stem}.mgt"
    png_path = out / f"{stem}_labels.png"
    save_tensor(mgt_path, np.asarray(final.data))
    save_labels(png_path, argmax_labels(final))
    outputs = [str(mgt_path), str(png_path)]

    if save_stages:
        stage_dir = Path(save_stages)
        stage_dir.mkdir(parents=True, exist_ok=True)
        for i, m in enumerate(maps, start=1):
            p = stage_dir / f"{stem}_stage{i}.mgt"
            save_tensor(p, np.asarray(m.data))
            outputs.append(str(p))

    reports_path = out / f"{stem}_stages.jsonl"
    with open(reports_path, "w") as f:
        for r in reports:
            f.write(json.dumps(r.as_dict()) + "\n")
    outputs.append(str(reports_path))

    manifest = RunManifest(
        config_digest=config_digest(Path(config_path).read_bytes()),
        seed=cfg.seed,
        stages=[r.as_dict() for r in reports],
        outputs=outputs,
    )
    manifest_path = out / f"{stem}_manifest.json"
    manifest_path.write_text(manifest.to_json())
    for r in reports:
        line = f"stage {r.level}: {r.patches_processed} patches, {r.points_replaced} points"
        if r.miou is not None:
            line += f", mIoU {r.miou:.4f}"
        click.echo(line)
    click.echo(f"wrote {mgt_path}")


def _replace_cfg(cfg: PipelineConfig, **changes) -> PipelineConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


@main.command("tile-plan")
@config_option
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False),
              help="Also write every window as CSV (scale, index, x, y, w, h).")
@_guarded
def tile_plan(config_path, csv_path):
    """Print the window grid for every scale level."""
    cfg = parse_config(config_path)
    rows = []
    for s in range(1, cfg.plan.num_levels + 1):
        wins = windows_for_scale(cfg.plan, s)
        h, w = cfg.plan.levels[s - 1]
        grid_r = cfg.plan.canvas_h // h
        grid_c = cfg.plan.canvas_w // w
        click.echo(f"scale {s}: {len(wins)} windows of {w}x{h} ({grid_r} rows x {grid_c} cols)")
        for i, win in enumerate(wins):
            rows.append((s, i, win.x, win.y, win.w, win.h))
    if csv_path:
        with open(csv_path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["scale", "index", "x", "y", "w", "h"])
            writer.writerows(rows)
        click.echo(f"wrote {csv_path}")


@main.command()
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", required=True, type=int)
@click.option("--count", required=True, type=int)
@click.option("--size", default=512, type=int, show_default=True)
@click.option("--classes", "num_classes", default=5, type=int, show_default=True)
@click.option("--detail-scale", default=1.0, type=float, show_default=True)
@_guarded
def fixtures(out_dir, seed, count, size, num_classes, detail_scale):
    """Generate a deterministic synthetic dataset."""
    stems = make_fixtures(out_dir, seed, count, size, num_classes, detail_scale)
    click.echo(f"wrote {len(stems)} image/label pairs under {out_dir}")


def _load_prediction(path: Path) -> LabelMap:
    if path.suffix == ".mgt":
        arr = load_tensor(path)
        if arr.ndim != 3:
            raise ZoomSegError(f"prediction tensor {path} must be (H, W, C)")
        return argmax_labels(ProbMap(np.maximum(arr, 0)))
    return load_labels(path)


@main.command("eval")
@click.option("--pred-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--gt-dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--classes", "num_classes", required=True, type=int)
@click.option("--ignore", "ignore_index", default=LabelMap.IGNORE, type=int, show_default=True)
@click.option("--bins", default=20, type=int, show_default=True)
@click.option("--out-json", default=None, type=click.Path(dir_okay=False))
@click.option("--cdf-csv", default=None, type=click.Path(dir_okay=False))
@_guarded
def eval_cmd(pred_dir, gt_dir, num_classes, ignore_index, bins, out_json, cdf_csv):
    """Score predictions (.mgt or label PNG) against ground-truth PNGs.

    Files pair by stem: <pred-dir>/name.{mgt,png} with <gt-dir>/name.png.
    """
    preds = sorted(
        p for p in Path(pred_dir).iterdir() if p.suffix in {".mgt", ".png"}
    )
    total = ConfusionMatrix(num_classes)
    per_image = []
    matched = 0
    for pred_path in preds:
        gt_path = Path(gt_dir) / f"{pred_path.stem}.png"
        if not gt_path.exists():
            continue
        matched += 1
        pred = _load_prediction(pred_path)
        gt = load_labels(gt_path)
        total = accumulate(total, pred, gt, ignore=ignore_index)
        img_cm = accumulate(ConfusionMatrix(num_classes), pred, gt, ignore=ignore_index)
        per_image.append(miou(img_cm))
    if matched == 0:
        raise EmptyInput(f"no prediction/ground-truth pairs between {pred_dir} and {gt_dir}")

    per_class = iou_per_class(total)
    result = {
        "images": matched,
        "miou": miou(total),
        "per_class_iou": [None if np.isnan(v) else float(v) for v in per_class],
    }
    text = json.dumps(result, indent=2)
    if out_json:
        Path(out_json).write_text(text)
    click.echo(text)
    if cdf_csv:
        with open(cdf_csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["iou_edge", "fraction_le"])
            writer.writerows(iou_cdf(per_image, bins))
        click.echo(f"wrote {cdf_csv}")


@main.command()
@config_option
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Fixtures directory with images/ and labels/.")
@click.option("--out", "out_csv", required=True, type=click.Path(dir_okay=False))
@click.option("--strategies", default="uncertainty_only,certainty_only,product,linear",
              show_default=True, help="Comma-separated strategy kinds to sweep.")
@click.option("--alphas", default="0.25,0.5,0.75", show_default=True,
              help="Alpha values for the linear strategy.")
@click.option("--kernels", default="1,3", show_default=True)
@click.option("--ks", default="256,4096,65536", show_default=True)
@click.option("--limit", default=0, type=int, help="Use only the first N images (0 = all).")
@_guarded
def ablate(config_path, data_dir, out_csv, strategies, alphas, kernels, ks, limit):
    """Sweep strategy x kernel x k over a dataset and tabulate mIoU."""
    cfg = parse_config(config_path)
    pairs = dataset_pairs(data_dir)
    if limit:
        pairs = pairs[:limit]

    kinds = [s.strip() for s in strategies.split(",") if s.strip()]
    alpha_vals = [float(a) for a in alphas.split(",") if a.strip()]
    kernel_vals = [int(v) for v in kernels.split(",") if v.strip()]
    k_vals = [int(v) for v in ks.split(",") if v.strip()]

    combos = []
    for kind in kinds:
        for kernel in kernel_vals:
            if kind == "linear":
                combos += [(kind, a, kernel) for a in alpha_vals]
            else:
                combos.append((kind, None, kernel))

    rows = []
    for kind, alpha, kernel in combos:
        for k in k_vals:
            strategy = ScoreStrategy(kind=kind, alpha=alpha, median_kernel=kernel)
            run_cfg = _replace_cfg(cfg, strategy=strategy, k=k)
            cm = ConfusionMatrix(cfg.classes)
            for img_path, lbl_path in pairs:
                image = load_image(img_path)
                gt = load_labels(lbl_path)
                backend = build_backend(run_cfg, gt)
                combiner = build_combiner(run_cfg)
                try:
                    maps, _ = run_pipeline(image, run_cfg, backend, combiner)
                finally:
                    backend.close()
                    combiner.close()
                cm = accumulate(cm, argmax_labels(maps[-1]), gt)
            score = miou(cm)
            rows.append((kind, "" if alpha is None else alpha, kernel, k, f"{score:.6f}"))
            click.echo(f"{kind:17s} alpha={alpha} kernel={kernel} k={k}: mIoU {score:.4f}")

    with open(out_csv, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["strategy", "alpha", "kernel", "k", "miou"])
        writer.writerows(rows)
    click.echo(f"wrote {out_csv}")


if __name__ == "__main__":
    main()

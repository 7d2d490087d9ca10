"""Coarse-to-fine refinement pipeline over the scale pyramid.

Stage 1 segments the whole image at the processing size and upsamples the
result to full resolution; every later stage tiles the image at its level,
re-runs the backend per patch, and selectively replaces the accumulated
map at the highest-scoring pixels. Fast mode processes only the most
uncertain windows at a subset of levels, re-ranking windows before each
processed stage.

Stages are sequential by construction; windows within a stage may run on a
bounded thread pool. Window outputs never overlap and all randomness is
keyed by (seed, level, window), so results are bit-identical for any
worker count.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .backends import Combiner, SegmentationBackend
from .errors import ConfigError
from .maps import Image, LabelMap, ProbMap, ScalarMap, argmax_labels, resample_bilinear
from .metrics import ConfusionMatrix, accumulate, miou
from .tiling import ScalePlan, Window, extract_patch, pad_to_canvas, windows_for_scale
from .uncertainty import (
    ScoreStrategy,
    replace_at_flat,
    score_map,
    top_k_flat_indices,
    uncertainty_map,
)

REPLACE_SOURCES = ("combined", "local")


@dataclass(frozen=True)
class FastConfig:
    """Which levels run in fast mode and how many windows each may process.

    Level 1 (the whole image) is always part of the subset.
    """

    scale_subset: tuple[int, ...]
    patches_per_scale: int

    def __post_init__(self):
        if 1 not in self.scale_subset:
            raise ConfigError("fast mode must include scale level 1")
        if self.patches_per_scale < 0:
            raise ConfigError("patches_per_scale must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    plan: ScalePlan
    classes: int
    k: int = 65536
    strategy: ScoreStrategy = field(default_factory=ScoreStrategy)
    replace_source: str = "combined"
    combiner: str = "mean"
    backend: str = "constant"
    backend_options: dict = field(default_factory=dict)
    seed: int | None = None
    workers: int = 1
    fast: FastConfig | None = None

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.classes}")
        if self.k < 0:
            raise ConfigError(f"k must be >= 0, got {self.k}")
        if self.replace_source not in REPLACE_SOURCES:
            raise ConfigError(
                f"replace_source must be one of {REPLACE_SOURCES}, got {self.replace_source!r}"
            )
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.fast is not None:
            for s in self.fast.scale_subset:
                if not 1 <= s <= self.plan.num_levels:
                    raise ConfigError(f"fast scale {s} outside 1..{self.plan.num_levels}")


@dataclass
class StageReport:
    level: int
    patches_processed: int
    points_replaced: int
    wall_time: float
    miou: float | None = None

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "patches_processed": self.patches_processed,
            "points_replaced": self.points_replaced,
            "wall_time": self.wall_time,
            "miou": self.miou,
        }


def fast_patch_subset(unc_full, windows: list[Window], n: int) -> list[Window]:
    """The n windows with the highest mean uncertainty, in enumeration order.

    Ties break toward the earlier window. Accepts a ScalarMap or a bare
    (H, W) array covering the same canvas the windows tile.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    data = unc_full.data if isinstance(unc_full, ScalarMap) else np.asarray(unc_full)
    if n >= len(windows):
        return list(windows)
    means = np.array(
        [float(data[w.y : w.y + w.h, w.x : w.x + w.w].mean()) for w in windows]
    )
    ranked = sorted(range(len(windows)), key=lambda i: (-means[i], i))
    chosen = sorted(ranked[:n])
    return [windows[i] for i in chosen]


class _Stage:
    """Shared state for one stage so windows can run on a worker pool."""

    def __init__(
        self,
        cfg: PipelineConfig,
        backend: SegmentationBackend,
        combiner: Combiner,
        image_data: np.ndarray,
        y_prev: ProbMap,
        level: int,
    ):
        self.cfg = cfg
        self.backend = backend
        self.combiner = combiner
        self.image_data = image_data
        self.y_prev = y_prev
        self.level = level
        self.canvas = np.array(y_prev.data, copy=True)

    def process_window(self, win: Window) -> int:
        cfg = self.cfg
        proc_h, proc_w = cfg.plan.proc_h, cfg.plan.proc_w
        img_patch = Image(
            self.image_data[win.y : win.y + win.h, win.x : win.x + win.w].copy()
        )
        y_patch = extract_patch(self.y_prev, win)

        img_small = resample_bilinear(img_patch, proc_h, proc_w)
        y_small = resample_bilinear(y_patch, proc_h, proc_w)

        local = self.backend.segment(img_small, self.level, win)
        combined = self.combiner.combine(y_small, local)

        unc_cum = uncertainty_map(y_small)
        unc_comb = uncertainty_map(combined)
        q = score_map(unc_cum, unc_comb, cfg.strategy)
        picks = top_k_flat_indices(q, cfg.k)

        source = combined if cfg.replace_source == "combined" else local
        refined = replace_at_flat(y_small, source, picks)
        refined = resample_bilinear(refined, win.h, win.w)

        self.canvas[win.y : win.y + win.h, win.x : win.x + win.w] = refined.data
        return int(picks.size)


def _run_windows(stage: _Stage, windows: list[Window], workers: int) -> int:
    if workers <= 1 or len(windows) <= 1:
        return sum(stage.process_window(w) for w in windows)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(stage.process_window, windows))


def run_stage(
    y_prev: ProbMap,
    image: Image,
    s: int,
    cfg: PipelineConfig,
    backend: SegmentationBackend,
    combiner: Combiner,
) -> tuple[ProbMap, StageReport]:
    """Refine y_prev at scale level s (s >= 2) and return the new map."""
    if s < 2:
        raise ConfigError("run_stage handles levels >= 2; level 1 is the initial segmentation")
    started = time.perf_counter()
    windows = windows_for_scale(cfg.plan, s)
    if cfg.fast is not None:
        if s not in cfg.fast.scale_subset:
            return y_prev, StageReport(s, 0, 0, time.perf_counter() - started)
        unc_full = uncertainty_map(y_prev)
        windows = fast_patch_subset(unc_full, windows, cfg.fast.patches_per_scale)

    stage = _Stage(cfg, backend, combiner, image.data, y_prev, s)
    replaced = _run_windows(stage, windows, cfg.workers)
    out = ProbMap(stage.canvas)
    report = StageReport(s, len(windows), replaced, time.perf_counter() - started)
    return out, report


def initial_segmentation(
    image: Image, cfg: PipelineConfig, backend: SegmentationBackend
) -> ProbMap:
    """Stage 1: segment the downsampled whole image, upsample to the canvas."""
    plan = cfg.plan
    full = Window(x=0, y=0, w=plan.canvas_w, h=plan.canvas_h)
    small = resample_bilinear(image, plan.proc_h, plan.proc_w)
    coarse = backend.segment(small, 1, full)
    return resample_bilinear(coarse, plan.canvas_h, plan.canvas_w)


def run_pipeline(
    image: Image,
    cfg: PipelineConfig,
    backend: SegmentationBackend,
    combiner: Combiner,
    gt: LabelMap | None = None,
) -> tuple[list[ProbMap], list[StageReport]]:
    """Run all stages; returns the per-stage maps (coarsest first) and reports.

    Every returned map covers the full image. The first map is the plain
    downsampling baseline; the last is the fully refined output. When gt is
    given each report carries the stage's mIoU.
    """
    plan = cfg.plan
    if (image.height, image.width) != (plan.image_h, plan.image_w):
        raise ConfigError(
            f"image is {image.height}x{image.width}, plan expects "
            f"{plan.image_h}x{plan.image_w}"
        )
    work_image = image
    if plan.pad and (plan.canvas_h, plan.canvas_w) != (image.height, image.width):
        work_image = Image(pad_to_canvas(image.data, plan.canvas_h, plan.canvas_w))

    def crop(m: ProbMap) -> ProbMap:
        if (m.height, m.width) == (plan.image_h, plan.image_w):
            return m
        return ProbMap(m.data[: plan.image_h, : plan.image_w].copy())

    maps: list[ProbMap] = []
    reports: list[StageReport] = []

    started = time.perf_counter()
    current = initial_segmentation(work_image, cfg, backend)
    report = StageReport(1, 1, 0, time.perf_counter() - started)
    maps.append(crop(current))
    reports.append(report)

    for s in range(2, plan.num_levels + 1):
        current, report = run_stage(current, work_image, s, cfg, backend, combiner)
        maps.append(crop(current))
        reports.append(report)

    if gt is not None:
        for m, r in zip(maps, reports):
            cm = accumulate(ConfusionMatrix(cfg.classes), argmax_labels(m), gt)
            r.miou = miou(cm)
    return maps, reports

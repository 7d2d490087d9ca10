"""Progressive multi-scale refinement for high-resolution segmentation.

Big images cannot be segmented in one pass under a fixed memory budget:
downsampling loses fine detail and independent patches lose the global
picture. This package walks a scale pyramid from the whole image down to
native-resolution tiles, runs a pluggable segmentation module on every
patch, and selectively rewrites the accumulated result at the pixels where
the running estimate is uncertain but the new one is confident.
"""

__version__ = "0.1.0"

from .errors import ZoomSegError
from .maps import Image, LabelMap, ProbMap, ScalarMap, argmax_labels, normalize_prob, resample_bilinear
from .tiling import ScalePlan, Window, build_scale_plan, extract_patch, paste_patch, windows_for_scale
from .uncertainty import (
    PixelCoord,
    ScoreStrategy,
    median_blur,
    score_map,
    select_top_k,
    selective_replace,
    uncertainty_map,
)
from .metrics import ConfusionMatrix, accumulate, iou_cdf, iou_per_class, miou
from .pipeline import FastConfig, PipelineConfig, StageReport, fast_patch_subset, run_pipeline, run_stage

__all__ = [
    "ZoomSegError",
    "Image", "LabelMap", "ProbMap", "ScalarMap",
    "argmax_labels", "normalize_prob", "resample_bilinear",
    "ScalePlan", "Window", "build_scale_plan", "extract_patch", "paste_patch", "windows_for_scale",
    "PixelCoord", "ScoreStrategy", "median_blur", "score_map",
    "select_top_k", "selective_replace", "uncertainty_map",
    "ConfusionMatrix", "accumulate", "iou_cdf", "iou_per_class", "miou",
    "FastConfig", "PipelineConfig", "StageReport", "fast_patch_subset", "run_pipeline", "run_stage",
]

"""Segmentation and combiner contracts plus the built-in test backends.

A segmentation backend turns a processing-size patch into a normalized
probability map; a combiner merges the cumulative and scale-local maps into
the candidate replacement map. Real models are hosted out of process (see
protocol.py); the in-process backends here exist for verification: a
constant or a degraded ground-truth oracle whose fidelity improves with the
scale level, emulating the detail a backbone loses to downsampling.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import BackendFailure, DimMismatch
from .maps import Image, LabelMap, ProbMap, _normalize_array, resample_bilinear
from .tiling import ScalePlan, Window, extract_patch
from .uncertainty import uncertainty_map


class SegmentationBackend:
    """Contract: segment() returns a normalized (proc_h, proc_w, C) ProbMap.

    The source window and scale level accompany every call. Model-backed
    implementations only need the pixels; ground-truth-derived backends use
    the window to locate the patch in their reference labels.
    """

    proc_h: int
    proc_w: int
    classes: int

    def segment(self, patch: Image, scale_level: int, window: Window | None = None) -> ProbMap:
        raise NotImplementedError

    def close(self) -> None:
        pass


class Combiner:
    """Contract: combine() returns a normalized ProbMap with the input dims."""

    def combine(self, cumulative: ProbMap, local: ProbMap) -> ProbMap:
        raise NotImplementedError

    def close(self) -> None:
        pass


def _check_patch(backend: SegmentationBackend, patch: Image) -> None:
    if (patch.height, patch.width) != (backend.proc_h, backend.proc_w):
        raise DimMismatch(
            f"patch is {patch.height}x{patch.width}, backend wants "
            f"{backend.proc_h}x{backend.proc_w}"
        )


class ConstantBackend(SegmentationBackend):
    """Predicts one fixed class everywhere; useful for plumbing tests."""

    def __init__(self, proc_h: int, proc_w: int, classes: int, class_index: int = 0):
        if not 0 <= class_index < classes:
            raise ValueError(f"class_index {class_index} outside [0, {classes})")
        self.proc_h = proc_h
        self.proc_w = proc_w
        self.classes = classes
        self.class_index = class_index

    def segment(self, patch: Image, scale_level: int, window: Window | None = None) -> ProbMap:
        _check_patch(self, patch)
        out = np.zeros((self.proc_h, self.proc_w, self.classes), dtype=np.float32)
        out[:, :, self.class_index] = 1.0
        return ProbMap(out)


@dataclass(frozen=True)
class OracleBackendConfig:
    """Degradation knobs for the ground-truth oracle.

    blur_sigma_at_coarsest: gaussian sigma (processing-grid pixels) applied
    at the coarsest level and scaled down linearly with the level's
    downsampling factor, reaching 0 at the finest level.
    label_noise_rate: probability of swapping a pixel's argmax with a random
    other class. softness: weight of the degraded one-hot vs the uniform
    distribution (1 = no uniform mixing).
    """

    gt: LabelMap
    blur_sigma_at_coarsest: float = 0.0
    label_noise_rate: float = 0.0
    softness: float = 1.0

    def __post_init__(self):
        if self.blur_sigma_at_coarsest < 0:
            raise ValueError("blur_sigma_at_coarsest must be >= 0")
        if not 0.0 <= self.label_noise_rate < 1.0:
            raise ValueError("label_noise_rate must be in [0, 1)")
        if not 0.0 < self.softness <= 1.0:
            raise ValueError("softness must be in (0, 1]")


class OracleBackend(SegmentationBackend):
    """Seeded stand-in for a trained backbone, derived from ground truth.

    The window's labels are one-hot encoded, bilinearly downsampled to the
    processing size (the lossy step that erases thin structures at coarse
    levels), gaussian-blurred with a sigma that shrinks as the level gets
    finer, mixed toward uniform, and finally argmax-flipped at a seeded
    random subset of pixels. Identical (seed, level, window) inputs give
    bit-identical outputs regardless of call order, which keeps multi-worker
    runs reproducible.
    """

    def __init__(self, plan: ScalePlan, classes: int, config: OracleBackendConfig, seed: int):
        if config.gt.data.size and config.gt.data.max() >= classes:
            bad = config.gt.data.max()
            if bad != LabelMap.IGNORE:
                raise ValueError(f"ground truth label {bad} outside [0, {classes})")
        self.plan = plan
        self.proc_h = plan.proc_h
        self.proc_w = plan.proc_w
        self.classes = classes
        self.config = config
        self.seed = seed

    def _sigma_for_level(self, s: int) -> float:
        coarse_factor = self.plan.levels[0][0] / self.plan.proc_h
        if coarse_factor <= 1.0:
            return 0.0
        factor = self.plan.levels[s - 1][0] / self.plan.proc_h
        return self.config.blur_sigma_at_coarsest * (factor - 1.0) / (coarse_factor - 1.0)

    def segment(self, patch: Image, scale_level: int, window: Window | None = None) -> ProbMap:
        _check_patch(self, patch)
        if window is None:
            raise BackendFailure("the oracle backend needs the source window")
        gt_patch = extract_patch(self.config.gt, window)

        onehot = np.zeros((window.h, window.w, self.classes), dtype=np.float32)
        labels = gt_patch.data
        valid = labels != LabelMap.IGNORE
        rows, cols = np.nonzero(valid)
        onehot[rows, cols, labels[valid]] = 1.0
        # Ignored pixels get a uniform vector so they stay normalizable.
        if not valid.all():
            onehot[~valid] = 1.0 / self.classes

        prob = resample_bilinear(ProbMap(_normalize_array(onehot)), self.proc_h, self.proc_w)
        data = np.asarray(prob.data)

        sigma = self._sigma_for_level(scale_level)
        if sigma > 0:
            data = ndimage.gaussian_filter(data, sigma=(sigma, sigma, 0), mode="nearest")
            data = _normalize_array(np.maximum(data, 0.0).astype(np.float32))

        soft = np.float32(self.config.softness)
        if soft < 1.0:
            data = soft * data + (np.float32(1.0) - soft) / np.float32(self.classes)

        if self.config.label_noise_rate > 0:
            data = self._flip_argmax(data, scale_level, window)

        return ProbMap(np.ascontiguousarray(data, dtype=np.float32))

    def _flip_argmax(self, data: np.ndarray, s: int, window: Window) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, s, window.x, window.y])
        )
        flip = rng.random((self.proc_h, self.proc_w)) < self.config.label_noise_rate
        if not flip.any():
            return data
        out = data.copy()
        current = np.argmax(out, axis=2)
        # Swapping the argmax entry with a random other class keeps the
        # vector a valid distribution while changing the prediction.
        target = rng.integers(0, self.classes - 1, size=(self.proc_h, self.proc_w))
        target = target + (target >= current)
        rows, cols = np.nonzero(flip)
        cur = current[rows, cols]
        tgt = target[rows, cols]
        a = out[rows, cols, cur].copy()
        out[rows, cols, cur] = out[rows, cols, tgt]
        out[rows, cols, tgt] = a
        return out


def _check_pair(y: ProbMap, o: ProbMap) -> None:
    if y.data.shape != o.data.shape:
        raise DimMismatch(f"maps disagree: {y.data.shape} vs {o.data.shape}")


class PassthroughCombiner(Combiner):
    """Returns the scale-local map untouched."""

    def combine(self, cumulative: ProbMap, local: ProbMap) -> ProbMap:
        _check_pair(cumulative, local)
        return local


class MeanCombiner(Combiner):
    """Pixel-wise average of both maps, renormalized."""

    def combine(self, cumulative: ProbMap, local: ProbMap) -> ProbMap:
        _check_pair(cumulative, local)
        half = np.float32(0.5)
        return ProbMap(_normalize_array((cumulative.data + local.data) * half))


class ConfidenceGateCombiner(Combiner):
    """Per pixel, keep whichever map is more confident about its prediction."""

    def combine(self, cumulative: ProbMap, local: ProbMap) -> ProbMap:
        _check_pair(cumulative, local)
        conf_c = 1.0 - uncertainty_map(cumulative).data
        conf_l = 1.0 - uncertainty_map(local).data
        take_local = conf_l > conf_c
        out = np.where(take_local[:, :, None], local.data, cumulative.data)
        return ProbMap(np.ascontiguousarray(out, dtype=np.float32))


COMBINERS = {
    "passthrough": PassthroughCombiner,
    "mean": MeanCombiner,
    "confidence_gate": ConfidenceGateCombiner,
}


def make_combiner(name: str) -> Combiner:
    try:
        return COMBINERS[name]()
    except KeyError:
        raise ValueError(f"unknown combiner {name!r}, expected one of {sorted(COMBINERS)}") from None

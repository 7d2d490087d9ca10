"""Uncertainty maps, refinement scores, top-k selection, selective replacement.

Per pixel, confidence is the gap between the two largest class
probabilities and uncertainty is its complement, so both live in [0, 1].
The refinement score ranks pixels where the cumulative map is unsure while
the combined map is sure; selectable strategies cover the ablations over
the score formula.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimMismatch, EvenKernel, OutOfBounds
from .maps import ProbMap, ScalarMap

STRATEGY_KINDS = ("uncertainty_only", "certainty_only", "product", "linear")


@dataclass(frozen=True)
class ScoreStrategy:
    """How the per-pixel refinement score is computed.

    kind "product" multiplies the cumulative map's uncertainty with the
    combined map's certainty; "linear" blends them with weight alpha;
    the *_only kinds use a single factor. median_kernel smooths the result
    (1 disables smoothing).
    """

    kind: str = "product"
    alpha: float | None = None
    median_kernel: int = 3

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}, expected one of {STRATEGY_KINDS}")
        if self.kind == "linear":
            if self.alpha is None or not 0.0 <= self.alpha <= 1.0:
                raise ValueError("linear strategy needs alpha in [0, 1]")
        elif self.alpha is not None:
            raise ValueError(f"alpha is only meaningful for the linear strategy, not {self.kind!r}")
        if self.median_kernel < 1 or self.median_kernel % 2 == 0:
            raise EvenKernel(f"median kernel must be odd and >= 1, got {self.median_kernel}")


@dataclass(frozen=True)
class PixelCoord:
    row: int
    col: int


def uncertainty_map(m: ProbMap) -> ScalarMap:
    """1 minus the gap between the top-1 and top-2 class probabilities."""
    c = m.classes
    part = np.partition(m.data, (c - 2, c - 1), axis=2)
    confidence = part[:, :, c - 1] - part[:, :, c - 2]
    return ScalarMap(np.clip(1.0 - confidence, 0.0, 1.0))


def median_blur(m: ScalarMap, kernel: int) -> ScalarMap:
    """Median of the kernel x kernel neighborhood, edges replicated."""
    if kernel < 1 or kernel % 2 == 0:
        raise EvenKernel(f"median kernel must be odd and >= 1, got {kernel}")
    if kernel == 1:
        return m
    return ScalarMap(ndimage.median_filter(m.data, size=kernel, mode="nearest"))


def score_map(unc_cum: ScalarMap, unc_combined: ScalarMap, strategy: ScoreStrategy) -> ScalarMap:
    """Per-pixel refinement priority under the chosen strategy, in [0, 1]."""
    if (unc_cum.height, unc_cum.width) != (unc_combined.height, unc_combined.width):
        raise DimMismatch(
            f"uncertainty maps disagree: {unc_cum.height}x{unc_cum.width} "
            f"vs {unc_combined.height}x{unc_combined.width}"
        )
    yu = unc_cum.data
    certainty = 1.0 - unc_combined.data
    if strategy.kind == "product":
        raw = yu * certainty
    elif strategy.kind == "uncertainty_only":
        raw = yu
    elif strategy.kind == "certainty_only":
        raw = certainty
    else:  # linear
        a = np.float32(strategy.alpha)
        raw = a * yu + (np.float32(1.0) - a) * certainty
    raw = np.clip(raw, 0.0, 1.0).astype(np.float32)
    return median_blur(ScalarMap(raw), strategy.median_kernel)


def top_k_flat_indices(q: ScalarMap, k: int) -> np.ndarray:
    """Flat indices of the k highest-scoring pixels, descending score.

    Ties break toward the smaller row-major index. k larger than the pixel
    count selects everything.
    """
    if k < 0:
        raise ValueError(f"k must be non-negative, got {k}")
    flat = q.data.reshape(-1)
    k = min(k, flat.size)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    order = np.argsort(-flat, kind="stable")
    return order[:k].astype(np.int64)


def select_top_k(q: ScalarMap, k: int) -> list[PixelCoord]:
    """The k highest-scoring pixels as coordinates, descending score."""
    idx = top_k_flat_indices(q, k)
    rows, cols = np.unravel_index(idx, (q.height, q.width))
    return [PixelCoord(int(r), int(c)) for r, c in zip(rows, cols)]


def replace_at_flat(y: ProbMap, r: ProbMap, flat_indices: np.ndarray) -> ProbMap:
    """selective_replace over precomputed flat pixel indices (fast path)."""
    if y.data.shape != r.data.shape:
        raise DimMismatch(f"maps disagree: {y.data.shape} vs {r.data.shape}")
    if flat_indices.size == 0:
        return y
    out = y.data.copy()
    out.reshape(-1, y.classes)[flat_indices] = r.data.reshape(-1, r.classes)[flat_indices]
    return ProbMap(out)


def selective_replace(y: ProbMap, r: ProbMap, points: list[PixelCoord]) -> ProbMap:
    """Copy r's full class vector into y at the listed pixels only."""
    if y.data.shape != r.data.shape:
        raise DimMismatch(f"maps disagree: {y.data.shape} vs {r.data.shape}")
    for p in points:
        if not (0 <= p.row < y.height and 0 <= p.col < y.width):
            raise OutOfBounds(f"pixel ({p.row}, {p.col}) outside {y.height}x{y.width}")
    flat = np.array([p.row * y.width + p.col for p in points], dtype=np.int64)
    return replace_at_flat(y, r, flat)

"""Map containers (probabilities, labels, scalars, images) and resampling.

All pixel data is float32 except labels, which are int32. Containers are
immutable after construction (the backing arrays are marked read-only) so
they can be shared freely across worker threads; every operation in this
module is a pure function.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroSumPixel

PROB_SUM_TOL = 1e-5
ZERO_SUM_EPS = 1e-12


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _as_f32(data, ndim: int, what: str) -> np.ndarray:
    arr = np.ascontiguousarray(data, dtype=np.float32)
    if arr.ndim != ndim:
        raise ValueError(f"{what} data must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel class probabilities, shape (H, W, C), C >= 2, values >= 0."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_f32(self.data, 3, "ProbMap")
        if arr.shape[2] < 2:
            raise ValueError(f"ProbMap needs at least 2 classes, got {arr.shape[2]}")
        if not np.all(arr >= 0):
            raise ValueError("ProbMap values must be non-negative and finite")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def classes(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel class indices, shape (H, W); 255 is the ignore index."""

    data: np.ndarray

    IGNORE = 255

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.int32)
        if arr.ndim != 2:
            raise ValueError(f"LabelMap data must be 2-dimensional, got shape {arr.shape}")
        if arr.size and arr.min() < 0:
            raise ValueError("LabelMap values must be non-negative")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ScalarMap:
    """Per-pixel real field, shape (H, W)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _freeze(_as_f32(self.data, 2, "ScalarMap")))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Image:
    """RGB image, shape (H, W, 3), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = _as_f32(self.data, 3, "Image")
        if arr.shape[2] != 3:
            raise ValueError(f"Image must have 3 channels, got {arr.shape[2]}")
        if arr.size and (arr.min() < 0 or arr.max() > 1):
            raise ValueError("Image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _normalize_array(arr: np.ndarray) -> np.ndarray:
    sums = arr.sum(axis=2, dtype=np.float32)
    bad = sums <= ZERO_SUM_EPS
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise ZeroSumPixel(int(row), int(col))
    return arr / sums[:, :, None]


def normalize_prob(m: ProbMap) -> ProbMap:
    """Rescale every pixel's class vector to sum to 1.

    Raises ZeroSumPixel for the first pixel whose vector sums to <= 1e-12;
    the per-pixel argmax is unchanged by the rescaling.
    """
    return ProbMap(_normalize_array(m.data))


def _resample_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of an (H, W) or (H, W, C) array, align-corners=false.

    Sample positions are output pixel centers mapped into the input grid;
    coordinates are clamped at the borders (edge replication). Interpolation
    accumulates in float64 so results stay within the input value range after
    the final cast back to float32.
    """
    in_h, in_w = arr.shape[:2]
    if (out_h, out_w) == (in_h, in_w):
        return arr

    def axis_coords(n_in: int, n_out: int):
        centers = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        centers = np.clip(centers, 0.0, n_in - 1.0)
        lo = np.floor(centers).astype(np.int64)
        hi = np.minimum(lo + 1, n_in - 1)
        frac = centers - lo
        return lo, hi, frac

    y0, y1, fy = axis_coords(in_h, out_h)
    x0, x1, fx = axis_coords(in_w, out_w)
    if arr.ndim == 3:
        fx = fx[None, :, None]
        fy = fy[:, None, None]
    else:
        fx = fx[None, :]
        fy = fy[:, None]

    work = arr.astype(np.float64)
    # Separable: interpolate along x, then along y.
    row_interp = work[:, x0] * (1.0 - fx) + work[:, x1] * fx
    out = row_interp[y0] * (1.0 - fy) + row_interp[y1] * fy
    return out.astype(np.float32)


def resample_bilinear(m, out_h: int, out_w: int):
    """Resize a ProbMap, ScalarMap, or Image to (out_h, out_w).

    ProbMap outputs are renormalized so each pixel remains a distribution.
    Resizing to the input dimensions returns the input unchanged
    (bit-identical by contract).
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims must be positive, got ({out_h}, {out_w})")
    if (out_h, out_w) == (m.height, m.width):
        return m
    out = _resample_array(m.data, out_h, out_w)
    if isinstance(m, ProbMap):
        return ProbMap(_normalize_array(out))
    return type(m)(out)


def argmax_labels(m: ProbMap) -> LabelMap:
    """Hard per-pixel prediction; ties break toward the lowest class index."""
    return LabelMap(np.argmax(m.data, axis=2).astype(np.int32))

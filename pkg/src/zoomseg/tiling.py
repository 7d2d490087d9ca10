"""Scale plans, per-scale window grids, and patch extraction/pasting.

A plan orders the pyramid from the whole image (level 1) down to the
processing size (level m). Every level tiles the working canvas with a
row-major grid of non-overlapping windows. In strict mode the canvas is the
image itself and every level must divide it evenly; in pad mode the canvas
is the coarsest level, the image is edge-replicated up to it, and outputs
are cropped back afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EndpointsMismatch, IndivisibleGrid, NonMonotonicScales, OutOfBounds, DimMismatch


@dataclass(frozen=True)
class Window:
    """Axis-aligned rectangle: top-left corner (x, y), size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"window size must be positive, got {self.w}x{self.h}")
        if self.x < 0 or self.y < 0:
            raise ValueError(f"window origin must be non-negative, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class ScalePlan:
    """Ordered scale levels (h, w), coarsest to finest, plus the processing size.

    canvas_h/canvas_w is the tiled area: the image itself in strict mode, the
    (possibly padded) coarsest level in pad mode. image_h/image_w always hold
    the original image size.
    """

    levels: tuple[tuple[int, int], ...]
    proc_h: int
    proc_w: int
    image_h: int
    image_w: int
    pad: bool = False

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def canvas_h(self) -> int:
        return self.levels[0][0]

    @property
    def canvas_w(self) -> int:
        return self.levels[0][1]


def build_scale_plan(
    H: int,
    W: int,
    proc_h: int,
    proc_w: int,
    levels: list[tuple[int, int]],
    pad: bool = False,
) -> ScalePlan:
    """Validate scale levels against an image of size (H, W).

    Strict mode requires the levels to run from exactly (H, W) down to
    exactly (proc_h, proc_w) with every level dividing the image. Pad mode
    instead requires the coarsest level to be at least the image and every
    level to divide the coarsest one.
    """
    if not levels:
        raise EndpointsMismatch("scale plan needs at least one level")
    lv = tuple((int(h), int(w)) for h, w in levels)
    for (h0, w0), (h1, w1) in zip(lv, lv[1:]):
        if not (h0 > h1 and w0 > w1):
            raise NonMonotonicScales(
                f"scale levels must strictly decrease, got {h0}x{w0} then {h1}x{w1}"
            )
    if lv[-1] != (proc_h, proc_w):
        raise EndpointsMismatch(
            f"finest level {lv[-1]} must equal the processing size ({proc_h}, {proc_w})"
        )
    if pad:
        ch, cw = lv[0]
        if ch < H or cw < W:
            raise EndpointsMismatch(
                f"pad mode canvas {ch}x{cw} must cover the image {H}x{W}"
            )
        for h, w in lv:
            if ch % h or cw % w:
                raise IndivisibleGrid(f"level {h}x{w} does not divide the canvas {ch}x{cw}")
    else:
        if lv[0] != (H, W):
            raise EndpointsMismatch(
                f"coarsest level {lv[0]} must equal the image size ({H}, {W})"
            )
        for h, w in lv:
            if H % h or W % w:
                raise IndivisibleGrid(f"level {h}x{w} does not divide the image {H}x{W}")
    return ScalePlan(levels=lv, proc_h=proc_h, proc_w=proc_w, image_h=H, image_w=W, pad=pad)


def windows_for_scale(plan: ScalePlan, s: int) -> list[Window]:
    """Row-major grid of non-overlapping windows for level s (1-based)."""
    if not 1 <= s <= plan.num_levels:
        raise ValueError(f"scale index {s} outside 1..{plan.num_levels}")
    h, w = plan.levels[s - 1]
    ch, cw = plan.canvas_h, plan.canvas_w
    if ch % h or cw % w:
        raise IndivisibleGrid(f"level {h}x{w} does not divide the canvas {ch}x{cw}")
    return [
        Window(x=x, y=y, w=w, h=h)
        for y in range(0, ch, h)
        for x in range(0, cw, w)
    ]


def extract_patch(m, win: Window):
    """Copy the sub-map covered by the window; works for any map kind."""
    if win.y + win.h > m.height or win.x + win.w > m.width:
        raise OutOfBounds(
            f"window ({win.x},{win.y},{win.w},{win.h}) exceeds map {m.height}x{m.width}"
        )
    return type(m)(m.data[win.y : win.y + win.h, win.x : win.x + win.w].copy())


def paste_patch(dst, win: Window, patch):
    """Return a copy of dst with the window region replaced by the patch."""
    if (patch.height, patch.width) != (win.h, win.w):
        raise DimMismatch(
            f"patch is {patch.height}x{patch.width}, window wants {win.h}x{win.w}"
        )
    if win.y + win.h > dst.height or win.x + win.w > dst.width:
        raise OutOfBounds(
            f"window ({win.x},{win.y},{win.w},{win.h}) exceeds map {dst.height}x{dst.width}"
        )
    out = dst.data.copy()
    out[win.y : win.y + win.h, win.x : win.x + win.w] = patch.data
    return type(dst)(out)


def pad_to_canvas(arr: np.ndarray, canvas_h: int, canvas_w: int) -> np.ndarray:
    """Edge-replicate a (H, W[, C]) array up to the canvas size."""
    pad_h = canvas_h - arr.shape[0]
    pad_w = canvas_w - arr.shape[1]
    if pad_h < 0 or pad_w < 0:
        raise OutOfBounds("canvas smaller than the array to pad")
    if pad_h == 0 and pad_w == 0:
        return arr
    widths = [(0, pad_h), (0, pad_w)] + [(0, 0)] * (arr.ndim - 2)
    return np.pad(arr, widths, mode="edge")

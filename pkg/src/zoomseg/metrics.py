"""Confusion-matrix IoU metrics and per-image IoU distributions."""
from __future__ import annotations

import numpy as np

from .errors import DimMismatch, EmptyInput, NoDefinedClasses
from .maps import LabelMap


class ConfusionMatrix:
    """C x C integer counts; rows are ground truth, columns are predictions.

    Accumulation is additive and order-independent, so per-shard matrices
    can be merged with `+`.
    """

    def __init__(self, num_classes: int, counts: np.ndarray | None = None):
        if num_classes < 2:
            raise ValueError(f"need at least 2 classes, got {num_classes}")
        self.num_classes = num_classes
        if counts is None:
            counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape != (num_classes, num_classes):
                raise DimMismatch(f"counts must be {num_classes}x{num_classes}, got {counts.shape}")
            if counts.min() < 0:
                raise ValueError("confusion counts must be non-negative")
        self.counts = counts

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise DimMismatch("cannot merge confusion matrices with different class counts")
        return ConfusionMatrix(self.num_classes, self.counts + other.counts)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and other.num_classes == self.num_classes
            and bool(np.array_equal(other.counts, self.counts))
        )

    def total(self) -> int:
        return int(self.counts.sum())


def accumulate(
    cm: ConfusionMatrix, pred: LabelMap, gt: LabelMap, ignore: int = LabelMap.IGNORE
) -> ConfusionMatrix:
    """Count (gt, pred) pairs for every pixel whose ground truth is not ignored."""
    if pred.data.shape != gt.data.shape:
        raise DimMismatch(f"prediction {pred.data.shape} vs ground truth {gt.data.shape}")
    c = cm.num_classes
    mask = gt.data != ignore
    g = gt.data[mask].astype(np.int64)
    p = pred.data[mask].astype(np.int64)
    if g.size and (g.max() >= c or p.max() >= c):
        raise ValueError(f"label value outside [0, {c}) encountered")
    counts = np.bincount(g * c + p, minlength=c * c).reshape(c, c)
    return ConfusionMatrix(c, cm.counts + counts)


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """IoU per class; NaN where the class appears in neither gt nor prediction."""
    inter = np.diag(cm.counts).astype(np.float64)
    union = cm.counts.sum(axis=1) + cm.counts.sum(axis=0) - np.diag(cm.counts)
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, np.nan)
    return iou


def miou(cm: ConfusionMatrix) -> float:
    """Mean IoU over the classes with a non-empty union."""
    iou = iou_per_class(cm)
    defined = ~np.isnan(iou)
    if not defined.any():
        raise NoDefinedClasses("every class has an empty union")
    return float(iou[defined].mean())


def iou_cdf(per_image_ious: list[float], bins: int) -> list[tuple[float, float]]:
    """Cumulative distribution of per-image IoU values.

    Returns (edge, fraction of images with IoU <= edge) rows for bins+1
    evenly spaced edges over [0, 1]; the fraction is monotone and ends at 1.
    """
    if not per_image_ious:
        raise EmptyInput("no per-image IoU values")
    if bins < 1:
        raise ValueError(f"need at least one bin, got {bins}")
    vals = np.asarray(per_image_ious, dtype=np.float64)
    if vals.min() < 0 or vals.max() > 1:
        raise ValueError("IoU values must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, bins + 1)
    return [(float(e), float((vals <= e).mean())) for e in edges]

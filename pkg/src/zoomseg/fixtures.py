"""Synthetic segmentation datasets for desk-scale verification.

Each fixture pairs an RGB image with a label map made of a few large
nearest-seed regions overlaid with thin structures: 1-3 px curves and
small blobs. The thin structures are what a coarse, downsampled pass
cannot recover, so refinement quality separates cleanly across scale
levels. detail_scale multiplies the amount of thin structure; at 0 only
the large regions remain. Generation is fully seeded and byte-stable.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import EmptyInput
from .maps import Image, LabelMap
from .tensorio import save_image, save_labels

CURVES_PER_IMAGE = 12
BLOBS_PER_IMAGE = 18
REGION_SEEDS = 7
IMAGE_NOISE = 0.035


def _region_labels(rng: np.random.Generator, size: int, num_classes: int) -> np.ndarray:
    """Large regions: nearest-seed partition with random classes."""
    n = REGION_SEEDS
    ys = rng.uniform(0, size, n)
    xs = rng.uniform(0, size, n)
    cls = rng.integers(0, num_classes, n)
    yy, xx = np.mgrid[0:size, 0:size]
    dist = (yy[:, :, None] - ys) ** 2 + (xx[:, :, None] - xs) ** 2
    return cls[np.argmin(dist, axis=2)].astype(np.int32)


def _stamp_disk(labels: np.ndarray, cy: float, cx: float, radius: float, cls: int) -> None:
    size = labels.shape[0]
    y0 = max(int(cy - radius) - 1, 0)
    y1 = min(int(cy + radius) + 2, size)
    x0 = max(int(cx - radius) - 1, 0)
    x1 = min(int(cx + radius) + 2, size)
    if y0 >= y1 or x0 >= x1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    labels[y0:y1, x0:x1][mask] = cls


def _draw_curve(labels: np.ndarray, rng: np.random.Generator, num_classes: int) -> None:
    """A wavy quadratic curve of width 1-3 px in a random class."""
    size = labels.shape[0]
    cls = int(rng.integers(0, num_classes))
    width = float(rng.integers(1, 4))
    p0 = rng.uniform(0, size, 2)
    p1 = rng.uniform(0, size, 2)
    ctrl = (p0 + p1) / 2 + rng.uniform(-size / 3, size / 3, 2)
    steps = int(2.5 * size)
    t = np.linspace(0.0, 1.0, steps)[:, None]
    pts = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * ctrl + t**2 * p1
    for cy, cx in pts:
        if -width <= cy < size + width and -width <= cx < size + width:
            _stamp_disk(labels, cy, cx, width / 2, cls)


def _draw_blob(labels: np.ndarray, rng: np.random.Generator, num_classes: int) -> None:
    size = labels.shape[0]
    cls = int(rng.integers(0, num_classes))
    radius = float(rng.uniform(1.5, 4.0))
    cy, cx = rng.uniform(0, size, 2)
    _stamp_disk(labels, cy, cx, radius, cls)


def make_label_map(
    rng: np.random.Generator, size: int, num_classes: int, detail_scale: float
) -> LabelMap:
    labels = _region_labels(rng, size, num_classes)
    for _ in range(round(CURVES_PER_IMAGE * detail_scale)):
        _draw_curve(labels, rng, num_classes)
    for _ in range(round(BLOBS_PER_IMAGE * detail_scale)):
        _draw_blob(labels, rng, num_classes)
    return LabelMap(labels)


def class_palette(num_classes: int) -> np.ndarray:
    """Fixed, well-separated base colors, one per class."""
    rng = np.random.default_rng(np.random.SeedSequence([514229, num_classes]))
    hues = (np.arange(num_classes) / num_classes + rng.uniform(0, 1 / num_classes)) % 1.0
    palette = np.empty((num_classes, 3), dtype=np.float32)
    for i, h in enumerate(hues):
        # Cheap HSV-ish wheel at full saturation, varying value.
        v = 0.55 + 0.4 * ((i * 2654435761) % 97) / 97.0
        k = h * 6.0
        palette[i] = v * np.clip([abs(k - 3) - 1, 2 - abs(k - 2), 2 - abs(k - 4)], 0, 1)
    return palette


def render_image(rng: np.random.Generator, labels: LabelMap, num_classes: int) -> Image:
    palette = class_palette(num_classes)
    base = palette[labels.data]
    noisy = base + rng.normal(0.0, IMAGE_NOISE, base.shape)
    return Image(np.clip(noisy, 0.0, 1.0).astype(np.float32))


def make_fixtures(
    out_dir: str | Path,
    seed: int,
    count: int,
    size: int = 512,
    num_classes: int = 5,
    detail_scale: float = 1.0,
) -> list[str]:
    """Write `count` image/label pairs under out_dir; returns the stems.

    Layout: <out_dir>/images/fix_NNN.png and <out_dir>/labels/fix_NNN.png.
    Identical arguments always produce byte-identical files.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if detail_scale < 0:
        raise ValueError(f"detail_scale must be >= 0, got {detail_scale}")
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    stems = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        labels = make_label_map(rng, size, num_classes, detail_scale)
        image = render_image(rng, labels, num_classes)
        stem = f"fix_{i:03d}"
        save_image(out / "images" / f"{stem}.png", image)
        save_labels(out / "labels" / f"{stem}.png", labels)
        stems.append(stem)
    return stems


def dataset_pairs(root: str | Path) -> list[tuple[Path, Path]]:
    """(image, label) path pairs under a fixtures directory, sorted by stem."""
    root = Path(root)
    images = sorted((root / "images").glob("*.png"))
    pairs = []
    for img in images:
        lbl = root / "labels" / img.name
        if lbl.exists():
            pairs.append((img, lbl))
    if not pairs:
        raise EmptyInput(f"no image/label pairs under {root}")
    return pairs

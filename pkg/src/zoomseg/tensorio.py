"""Tensor and image persistence.

The ".mgt" tensor file is magic b"MGT1" followed by the bare tensor
encoding also used on the external-process wire: u32 LE ndim, ndim u32 LE
dims, then the float32 LE payload in row-major order. Images are 8-bit RGB
PNGs; label maps are 8-bit single-channel PNGs with 255 as the ignore index.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np
from PIL import Image as PILImage

from .errors import ProtocolError
from .maps import Image, LabelMap

MGT_MAGIC = b"MGT1"
MAX_NDIM = 8
MAX_ELEMS = 1 << 28  # 1 GiB of float32; anything bigger is a corrupt header


def encode_tensor(arr: np.ndarray) -> bytes:
    """Bare tensor encoding: ndim, dims, f32 row-major payload (all LE)."""
    arr = np.ascontiguousarray(arr, dtype="<f4")
    header = struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + arr.tobytes()


def _read_exact(stream: BinaryIO, n: int) -> bytes:
    buf = stream.read(n)
    if buf is None or len(buf) != n:
        raise ProtocolError(f"truncated tensor data: wanted {n} bytes, got {len(buf or b'')}")
    return buf


def decode_tensor(stream: BinaryIO) -> np.ndarray:
    """Read one bare-encoded tensor from a binary stream."""
    (ndim,) = struct.unpack("<I", _read_exact(stream, 4))
    if ndim == 0 or ndim > MAX_NDIM:
        raise ProtocolError(f"implausible tensor ndim {ndim}")
    dims = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim))
    if any(d == 0 for d in dims):
        raise ProtocolError(f"zero-sized tensor dimension in {dims}")
    n = int(np.prod(dims, dtype=np.int64))
    if n > MAX_ELEMS:
        raise ProtocolError(f"implausible tensor size {dims}")
    payload = _read_exact(stream, 4 * n)
    return np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)


def save_tensor(path: str | Path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(MGT_MAGIC)
        f.write(encode_tensor(arr))


def load_tensor(path: str | Path) -> np.ndarray:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != MGT_MAGIC:
            raise ProtocolError(f"bad tensor file magic {magic!r} in {path}")
        return decode_tensor(f)


def save_image(path: str | Path, img: Image) -> None:
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(data, mode="RGB").save(path, format="PNG")


def load_image(path: str | Path) -> Image:
    with PILImage.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return Image(arr)


def save_labels(path: str | Path, labels: LabelMap) -> None:
    if labels.data.size and labels.data.max() > 255:
        raise ValueError("label indices above 255 cannot be stored as 8-bit PNG")
    PILImage.fromarray(labels.data.astype(np.uint8), mode="L").save(path, format="PNG")


def load_labels(path: str | Path) -> LabelMap:
    with PILImage.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        arr = np.asarray(im, dtype=np.int32)
    return LabelMap(arr)

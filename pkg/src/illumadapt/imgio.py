"""Lossless 8-bit PNG image I/O for H x W x 3 float arrays in [0, 1].

All dataset images are quantized to the 8-bit grid (multiples of 1/255) at
creation time, so a write -> read cycle is bit-exact.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError


def quantize(image: np.ndarray) -> np.ndarray:
    """Snap pixel values to the 8-bit grid: round(v * 255) / 255."""
    return np.round(image * 255.0) / 255.0


def save_image(path: Path | str, image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValidationError(f"image must be H x W x 3, got shape {image.shape}")
    lo, hi = float(image.min()), float(image.max())
    if lo < 0.0 or hi > 1.0:
        raise ValidationError(f"image values must lie in [0, 1], got [{lo}, {hi}]")
    arr = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(path: Path | str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0

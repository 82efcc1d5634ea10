"""8-bit RGB image buffers: loading, saving, luma, and file hashing helpers."""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError

# Rec.601 luma weights.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def load_image(path: Path | str) -> np.ndarray:
    """Decode an image file to an HxWx3 uint8 RGB array."""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def save_image(pixels: np.ndarray, path: Path | str) -> None:
    """Encode an HxWx3 uint8 RGB array to `path` (format from suffix)."""
    require_rgb8(pixels)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels, mode="RGB").save(path)


def require_rgb8(pixels: np.ndarray) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise ValidationError(
            f"expected HxWx3 uint8 RGB buffer, got shape {pixels.shape} dtype {pixels.dtype}"
        )


def mean_luma(pixels: np.ndarray) -> float:
    """Mean Rec.601 luma (0.299 R + 0.587 G + 0.114 B) over all pixels."""
    require_rgb8(pixels)
    flat = pixels.reshape(-1, 3).astype(np.float64)
    return float(np.mean(flat @ np.asarray(LUMA_WEIGHTS, dtype=np.float64)))


def file_sha256(path: Path | str) -> str:
    """Hex SHA-256 of a file's contents."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()

"""Pixel-importance images for image-shaped datasets.

For a sample whose features are pixels, two 8-bit PGM images are
produced: a mask with the top-k most important pixels drawn white on
black, and an overlay where those pixels keep their original intensity
against a background filled with the source picture's dominant gray.
On a black-background digit, important pixels that carry no ink vanish
into the overlay, which is exactly what makes it readable.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .errors import DataError
from .metrics import rank_features

logger = logging.getLogger(__name__)


def write_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a (rows, cols) uint8 array as binary PGM (P5)."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise DataError(f"PGM image must be 2-D, got shape {image.shape}")
    rows, cols = image.shape
    header = f"P5\n{cols} {rows}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise DataError(f"{path}: not a binary PGM (P5) file")
    fields: list[bytes] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(blob[start:pos])
    cols, rows, maxval = (int(f) for f in fields)
    if maxval != 255:
        raise DataError(f"{path}: only 8-bit PGM supported, maxval={maxval}")
    pos += 1
    pixels = np.frombuffer(blob, dtype=np.uint8, offset=pos, count=rows * cols)
    return pixels.reshape(rows, cols).copy()


def image_side(n_features: int) -> int:
    side = math.isqrt(n_features)
    if side * side != n_features:
        raise DataError(f"{n_features} features do not form a square image")
    return side


def pixels_to_u8(pixel_features: np.ndarray) -> np.ndarray:
    """[0, 1] pixel features back to a square uint8 image."""
    side = image_side(pixel_features.shape[0])
    scaled = np.clip(np.rint(pixel_features * 255.0), 0, 255).astype(np.uint8)
    return scaled.reshape(side, side)


def dominant_gray(image: np.ndarray) -> int:
    """Most frequent pixel value; ties resolved toward the lower value."""
    counts = np.bincount(image.reshape(-1), minlength=256)
    return int(np.argmax(counts))


def importance_mask(attr_values: np.ndarray, n_features: int, k: int) -> np.ndarray:
    """Top-k important pixels white on black; fewer if fewer are nonzero."""
    side = image_side(n_features)
    top = rank_features(attr_values, k)
    if len(top) < k:
        logger.info("only %d pixels carry nonzero attribution (k=%d)", len(top), k)
    out = np.zeros(n_features, dtype=np.uint8)
    out[top] = 255
    return out.reshape(side, side)


def importance_overlay(attr_values: np.ndarray, pixel_features: np.ndarray, k: int) -> np.ndarray:
    """Top-k pixels at their original intensity over the dominant gray."""
    if attr_values.shape[0] != pixel_features.shape[0]:
        raise DataError(
            f"attribution length {attr_values.shape[0]} does not match "
            f"{pixel_features.shape[0]} pixels"
        )
    original = pixels_to_u8(pixel_features)
    top = rank_features(attr_values, k)
    out = np.full(original.size, dominant_gray(original), dtype=np.uint8)
    out[top] = original.reshape(-1)[top]
    return out.reshape(original.shape)

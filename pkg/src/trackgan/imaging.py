"""Pixel-level primitives: raster conventions, grayscale, pooling, overlays and PNG I/O.

Images are plain numpy arrays. An RGB raster is ``(H, W, 3)`` and is either
``uint8`` in [0, 255] or floating point in [0, 1]. Gray images and probability
masks are float ``(H, W)`` in [0, 1]; binary masks are ``uint8`` ``(H, W)``
holding 0 or 1.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

# per-mille so that white maps to exactly 1.0
LUMA_WEIGHTS = np.array([299, 587, 114])
MASK_THRESHOLD = 128

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


def check_rgb(img: np.ndarray) -> None:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) raster, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("raster must be at least 1x1")
    if img.dtype == np.uint8:
        return
    if not np.issubdtype(img.dtype, np.floating):
        raise TypeError(f"raster dtype must be uint8 or float, got {img.dtype}")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ValueError("float rasters must lie in [0, 1]")


def check_binary(mask: np.ndarray) -> None:
    if mask.ndim != 2:
        raise ValueError(f"expected an (H, W) mask, got shape {mask.shape}")
    if not np.isin(mask, (0, 1)).all():
        raise ValueError("binary mask holds values other than 0 and 1")


def as_float(img: np.ndarray) -> np.ndarray:
    """Return ``img`` as float64 in [0, 1] regardless of storage mode."""
    if img.dtype == np.uint8:
        return img.astype(np.float64) / 255.0
    return img.astype(np.float64, copy=False)


def as_uint8(img: np.ndarray) -> np.ndarray:
    if img.dtype == np.uint8:
        return img
    return np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """ITU-R 601 luminance of an RGB raster, normalized to [0, 1]."""
    check_rgb(img)
    if img.dtype == np.uint8:
        gray = (img.astype(np.int64) @ LUMA_WEIGHTS) / 255_000.0
    else:
        gray = (img.astype(np.float64) @ LUMA_WEIGHTS) / 1000.0
    return np.clip(gray, 0.0, 1.0)


def _windows(g: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    return sliding_window_view(g, (kernel, kernel))[::stride, ::stride]


def avg_pool(g: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Unpadded average pooling; output side is ``(n - kernel) // stride + 1``."""
    if g.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {g.shape}")
    if kernel < 1 or stride < 1:
        raise ValueError("kernel and stride must be >= 1")
    if kernel > min(g.shape) or stride > min(g.shape):
        raise ValueError(f"kernel={kernel}/stride={stride} larger than image {g.shape}")
    return _windows(np.asarray(g, dtype=np.float64), kernel, stride).mean(axis=(-2, -1))


def overlay(
    img: np.ndarray,
    mask: np.ndarray,
    color: tuple[float, float, float] = (255, 0, 0),
    alpha: float = 0.5,
) -> np.ndarray:
    """Blend ``color`` into ``img`` wherever ``mask`` is set.

    ``color`` is given on the 0-255 scale; the result keeps the input's storage
    mode.
    """
    check_rgb(img)
    if mask.shape != img.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match image {img.shape[:2]}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    sel = mask.astype(bool)
    out = img.copy()
    if alpha == 0.0 or not sel.any():
        return out
    rgb = np.asarray(color, dtype=np.float64)
    if img.dtype == np.uint8:
        blended = (1.0 - alpha) * img[sel].astype(np.float64) + alpha * rgb
        out[sel] = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    else:
        out[sel] = (1.0 - alpha) * img[sel] + alpha * (rgb / 255.0)
    return out


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def load_mask(path: str | Path) -> np.ndarray:
    """Read a single-channel mask; pixels at or above 128 are track."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return (arr >= MASK_THRESHOLD).astype(np.uint8)


def save_image(path: str | Path, img: np.ndarray) -> None:
    check_rgb(img)
    Image.fromarray(as_uint8(img), mode="RGB").save(path, format="PNG")


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    check_binary(mask)
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(path, format="PNG")


def save_prob(path: str | Path, prob: np.ndarray) -> None:
    """Write a probability map as an 8-bit grayscale PNG."""
    Image.fromarray(as_uint8(np.clip(prob, 0.0, 1.0)), mode="L").save(path, format="PNG")

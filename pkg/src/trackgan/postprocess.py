"""Mask cleanup: threshold, drop small connected groups, then dilate and erode.

Dilation and erosion follow the translated-element set definitions

    dilate(A, B) = { z : (B)_z intersects A }
    erode(A, B)  = { z : (B)_z is contained in A }

with ``(B)_z`` the element's cells shifted by ``z`` relative to its centre.
Outside the image is background: element cells falling off the grid are
ignored by dilation and count as misses for erosion.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class StructuringElement:
    cells: np.ndarray = field(default_factory=lambda: np.ones((3, 3), dtype=bool))

    def __post_init__(self):
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1] or cells.shape[0] % 2 == 0:
            raise ValueError(f"structuring element must be an odd square grid, got {cells.shape}")
        if not cells.any():
            raise ValueError("structuring element needs at least one foreground cell")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def radius(self) -> int:
        return self.cells.shape[0] // 2

    def offsets(self) -> list[tuple[int, int]]:
        r = self.radius
        return [(int(i) - r, int(j) - r) for i, j in zip(*np.nonzero(self.cells))]

    def reflect(self) -> "StructuringElement":
        return StructuringElement(self.cells[::-1, ::-1])

    @classmethod
    def square(cls, size: int = 3) -> "StructuringElement":
        return cls(np.ones((size, size), dtype=bool))

    @classmethod
    def from_rows(cls, text: str) -> "StructuringElement":
        """Parse rows of 0/1 separated by ``;`` or newlines, e.g. ``010;111;010``."""
        rows = [r.strip() for r in text.replace("\n", ";").split(";") if r.strip()]
        return cls(np.array([[c == "1" for c in r] for r in rows], dtype=bool))

    def to_rows(self) -> str:
        return ";".join("".join("1" if c else "0" for c in row) for row in self.cells)

    def __eq__(self, other):
        return isinstance(other, StructuringElement) and np.array_equal(self.cells, other.cells)

    def __hash__(self):
        return hash(self.to_rows())


@dataclass(frozen=True)
class PostprocessConfig:
    binarize_threshold: float = 0.5
    min_component_size: int = 64
    connectivity: int = 8
    element: StructuringElement = field(default_factory=StructuringElement)

    def __post_init__(self):
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie in (0, 1)")
        if self.min_component_size < 1:
            raise ValueError("min_component_size must be >= 1")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    def scaled_to(self, height: int, width: int) -> "PostprocessConfig":
        """Scale ``min_component_size`` (set for 128x128) to another frame area."""
        size = max(1, round(self.min_component_size * height * width / (128 * 128)))
        return PostprocessConfig(self.binarize_threshold, size, self.connectivity, self.element)


def binarize(p: np.ndarray, t: float = 0.5) -> np.ndarray:
    if not 0.0 < t < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(p) >= t).astype(np.uint8)


def filter_components(m: np.ndarray, cfg: PostprocessConfig = PostprocessConfig()) -> np.ndarray:
    """Clear every connected foreground group smaller than ``cfg.min_component_size``."""
    structure = ndimage.generate_binary_structure(2, 2 if cfg.connectivity == 8 else 1)
    labels, count = ndimage.label(m, structure=structure)
    if count == 0:
        return np.zeros_like(m, dtype=np.uint8)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= cfg.min_component_size
    keep[0] = False
    return keep[labels].astype(np.uint8)


def _shifted(a: np.ndarray, dy: int, dx: int, r: int, fill: bool) -> np.ndarray:
    """View of ``a`` read at ``z + (dy, dx)`` for every ``z``, padded with ``fill``."""
    h, w = a.shape
    padded = np.pad(a, r, mode="constant", constant_values=fill)
    return padded[r + dy : r + dy + h, r + dx : r + dx + w]


def dilate(a: np.ndarray, b: StructuringElement = StructuringElement()) -> np.ndarray:
    src = np.asarray(a, dtype=bool)
    out = np.zeros_like(src)
    for dy, dx in b.offsets():
        out |= _shifted(src, dy, dx, b.radius, False)
    return out.astype(np.uint8)


def erode(a: np.ndarray, b: StructuringElement = StructuringElement()) -> np.ndarray:
    src = np.asarray(a, dtype=bool)
    out = np.ones_like(src)
    for dy, dx in b.offsets():
        out &= _shifted(src, dy, dx, b.radius, False)
    return out.astype(np.uint8)


def close(a: np.ndarray, b: StructuringElement = StructuringElement()) -> np.ndarray:
    return erode(dilate(a, b), b)


def postprocess(p: np.ndarray, cfg: PostprocessConfig = PostprocessConfig()) -> np.ndarray:
    m = binarize(p, cfg.binarize_threshold)
    m = filter_components(m, cfg)
    return close(m, cfg.element)

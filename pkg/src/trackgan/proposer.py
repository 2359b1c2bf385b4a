"""Non-learned first guess of track membership.

Road surface is dark and locally uniform; grass, gravel and sky are brighter
and textured. The proposer scores each pixel by gating two-scale local
uniformity with a per-image darkness test.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import to_grayscale


@dataclass(frozen=True)
class ProposerConfig:
    kernel_small: int = 3
    kernel_large: int = 7
    variance_threshold: float = 0.01
    dark_quantile: float = 0.5
    blend: float = 0.5
    binary: bool = False

    def __post_init__(self):
        if self.kernel_small % 2 == 0 or self.kernel_large % 2 == 0:
            raise ValueError("proposer kernels must be odd")
        if not 1 <= self.kernel_small < self.kernel_large:
            raise ValueError("need 1 <= kernel_small < kernel_large")
        if self.variance_threshold < 0:
            raise ValueError("variance_threshold must be non-negative")
        if not 0.0 < self.dark_quantile < 1.0:
            raise ValueError("dark_quantile must lie in (0, 1)")
        if not 0.0 <= self.blend <= 1.0:
            raise ValueError("blend must lie in [0, 1]")


def regional_stats(g: np.ndarray, kernel: int) -> tuple[np.ndarray, np.ndarray]:
    """Windowed mean and variance at every pixel, reflect-padded to keep the shape.

    Padding mirrors about the edge pixel without repeating it (numpy ``reflect``).
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"kernel must be a positive odd integer, got {kernel}")
    if kernel > min(g.shape):
        raise ValueError(f"kernel {kernel} exceeds image size {g.shape}")
    r = kernel // 2
    padded = np.pad(np.asarray(g, dtype=np.float64), r, mode="reflect")
    win = sliding_window_view(padded, (kernel, kernel))
    return win.mean(axis=(-2, -1)), win.var(axis=(-2, -1))


def initial_guess(img: np.ndarray, cfg: ProposerConfig = ProposerConfig()) -> np.ndarray:
    g = to_grayscale(img)
    _, var_small = regional_stats(g, cfg.kernel_small)
    _, var_large = regional_stats(g, cfg.kernel_large)
    uniform_small = (var_small < cfg.variance_threshold).astype(np.float64)
    uniform_large = (var_large < cfg.variance_threshold).astype(np.float64)
    dark = (g <= np.quantile(g, cfg.dark_quantile)).astype(np.float64)
    score = dark * (cfg.blend * uniform_small + (1.0 - cfg.blend) * uniform_large)
    if cfg.binary:
        score = (score >= 0.5).astype(np.float64)
    return score

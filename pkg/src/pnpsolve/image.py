"""Image container conventions, metrics and noise synthesis.

Images are plain ``numpy.ndarray`` objects of dtype float64 in planar
layout ``(channels, height, width)``. Nominal range is [0, 1], but
intermediate iterates may leave it; only :func:`clamp01` clips.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "as_image",
    "check_same_shape",
    "mse",
    "psnr",
    "psnr_per_channel",
    "add_gaussian_noise",
    "clamp01",
    "crop",
    "make_rng",
]


def as_image(x, *, copy: bool = False) -> np.ndarray:
    """Validate ``x`` as an image and return it as a float64 (C, H, W) array.

    A 2-D array is promoted to a single-channel image.
    """
    arr = np.array(x, dtype=np.float64, copy=copy) if copy else np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[np.newaxis]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"expected a (channels, height, width) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite samples")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def mse(a, b) -> float:
    """Mean squared difference over all samples of all channels."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    d = a - b
    return float(np.mean(d * d))


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not peak > 0:
        raise ValueError("peak must be positive")
    err = mse(a, b)
    if err == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / err))


def psnr_per_channel(a, b, peak: float = 1.0) -> list[float]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b)
    return [psnr(ac, bc, peak) for ac, bc in zip(a, b)]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator keyed by a 64-bit seed.

    Philox draws are a pure function of (key, counter), so a given seed
    yields the same stream regardless of thread count or platform.
    """
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(key=seed))


def add_gaussian_noise(x, sigma: float, seed: int) -> np.ndarray:
    """Return ``x + n`` with ``n`` i.i.d. N(0, sigma**2). The result is not clamped."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValueError("sigma must be finite and non-negative")
    if sigma == 0:
        return x.copy()
    noise = make_rng(seed).standard_normal(x.size).reshape(x.shape)
    return x + sigma * noise


def clamp01(x) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)


def crop(x, border: int) -> np.ndarray:
    """Drop ``border`` pixels on every side of the spatial axes."""
    x = np.asarray(x)
    if border == 0:
        return x
    h, w = x.shape[-2:]
    if 2 * border >= min(h, w):
        raise ValueError(f"crop border {border} too large for {h}x{w} image")
    return x[..., border : h - border, border : w - border]

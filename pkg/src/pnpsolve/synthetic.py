"""Deterministic synthetic ground-truth images."""

from __future__ import annotations

import numpy as np

from .image import make_rng

__all__ = ["cartoon", "color_cartoon", "ramp_edges", "resolution_chart", "GENERATORS", "generate"]


def _grid(h: int, w: int):
    yy, xx = np.mgrid[0:h, 0:w]
    return yy + 0.5, xx + 0.5


def cartoon(size: int = 64, seed: int = 0, shapes: int = 6) -> np.ndarray:
    """Piecewise-constant grayscale scene of rectangles and disks, shape (1, size, size)."""
    rng = make_rng(seed)
    yy, xx = _grid(size, size)
    img = np.full((size, size), 0.2 + 0.2 * rng.random())
    for i in range(shapes):
        level = 0.1 + 0.8 * rng.random()
        cy, cx = rng.uniform(0.15, 0.85, 2) * size
        r = rng.uniform(0.08, 0.25) * size
        if i % 2 == 0:
            inside = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < 0.7 * r)
        else:
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        img[inside] = level
    return img[np.newaxis]


def color_cartoon(size: int = 64, seed: int = 0, shapes: int = 6) -> np.ndarray:
    """Piecewise-constant color scene, shape (3, size, size).

    Region colors are a shared luminance plus a modest chroma offset, the
    kind of inter-channel correlation natural images show.
    """
    rng = make_rng(seed)
    yy, xx = _grid(size, size)

    def color():
        lum = 0.2 + 0.6 * rng.random()
        return np.clip(lum + 0.15 * rng.uniform(-1, 1, 3), 0.0, 1.0)

    img = np.empty((3, size, size))
    img[:] = color()[:, None, None]
    for i in range(shapes):
        col = color()
        cy, cx = rng.uniform(0.15, 0.85, 2) * size
        r = rng.uniform(0.1, 0.28) * size
        if i % 2 == 0:
            inside = (np.abs(yy - cy) < r) & (np.abs(xx - cx) < 0.7 * r)
        else:
            inside = (yy - cy) ** 2 + (xx - cx) ** 2 < r * r
        img[:, inside] = col[:, None]
    return img


def ramp_edges(size: int = 64, seed: int = 0) -> np.ndarray:
    """Smooth gradient background with a few sharp-edged bars, shape (1, size, size)."""
    rng = make_rng(seed)
    yy, xx = _grid(size, size)
    a, b = rng.uniform(-0.5, 0.5, 2)
    img = 0.5 + 0.3 * (a * (xx / size - 0.5) + b * (yy / size - 0.5))
    for _ in range(3):
        y0 = int(rng.integers(0, size - size // 4))
        x0 = int(rng.integers(0, size - size // 8))
        img[y0 : y0 + size // 4, x0 : x0 + size // 8] += rng.uniform(-0.3, 0.3)
    return np.clip(img, 0.0, 1.0)[np.newaxis]


def resolution_chart(size: int = 64) -> np.ndarray:
    """Bars of decreasing period in the top half, a radial sector star below."""
    yy, xx = _grid(size, size)
    img = np.full((size, size), 0.5)
    top = yy < size / 2
    period = 2.0 + 10.0 * (1.0 - xx / size)
    img[top] = np.where(np.sin(np.pi * xx[top] / period[top] * 2) > 0, 0.85, 0.15)
    cy, cx = 0.75 * size, 0.5 * size
    ang = np.arctan2(yy - cy, xx - cx)
    rad = np.hypot(yy - cy, xx - cx)
    star = (~top) & (rad < 0.24 * size)
    img[star] = np.where(np.sin(12 * ang[star]) > 0, 0.9, 0.1)
    return img[np.newaxis]


GENERATORS = {
    "cartoon": cartoon,
    "color_cartoon": color_cartoon,
    "ramp_edges": ramp_edges,
    "chart": lambda size=64, seed=0: resolution_chart(size),
}


def generate(name: str, size: int = 64, seed: int = 0) -> np.ndarray:
    try:
        gen = GENERATORS[name]
    except KeyError:
        raise ValueError(f"unknown synthetic image {name!r}; choose from {', '.join(GENERATORS)}") from None
    return gen(size=size, seed=seed)

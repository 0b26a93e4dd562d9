"""Denoisers that can stand in for a regularizer's proximal map.

Every denoiser is a callable ``G(x) -> x_hat`` on (C, H, W) float64
images. None of them clamp: the splitting schemes feed them values
outside [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .linops import grad_forward

__all__ = [
    "Denoiser",
    "IdentityDenoiser",
    "GaussianSmooth",
    "NlmParams",
    "NonLocalMeans",
    "TvProx",
    "apply",
    "tv_norm",
    "tv_prox_denoise",
    "tv_prox_iterates",
    "nlm_denoise",
    "gaussian_smooth",
]


class Denoiser:
    """Base class. ``channels`` of ``None`` accepts any channel count."""

    channels: int | None = None

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3:
            raise ValueError(f"expected a (channels, height, width) array, got shape {x.shape}")
        if self.channels is not None and x.shape[0] != self.channels:
            raise ValueError(f"{type(self).__name__} expects {self.channels} channels, got {x.shape[0]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("denoiser input contains non-finite samples")
        return self._apply(x)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def apply(g: Denoiser, x) -> np.ndarray:
    return g(x)


class IdentityDenoiser(Denoiser):
    def __init__(self, channels: int | None = None):
        self.channels = channels

    def _apply(self, x):
        return x.copy()

    def __repr__(self):
        return "IdentityDenoiser()"


# ---------------------------------------------------------------------------
# Gaussian smoothing
# ---------------------------------------------------------------------------


def _gaussian_taps(std: float) -> np.ndarray:
    if std < 0.5:
        return np.ones(1)
    radius = math.ceil(3 * std)
    r = np.arange(-radius, radius + 1)
    g = np.exp(-(r**2) / (2.0 * std * std))
    return g / g.sum()


def gaussian_smooth(std: float, x) -> np.ndarray:
    """Separable truncated Gaussian blur (radius ``ceil(3*std)``), replicate boundary.

    Widths under half a pixel collapse the kernel to a delta.
    """
    if not std > 0:
        raise ValueError("std must be positive")
    x = np.asarray(x, dtype=np.float64)
    taps = _gaussian_taps(std)
    if taps.size == 1:
        return x.copy()
    out = ndimage.convolve1d(x, taps, axis=-1, mode="nearest")
    return ndimage.convolve1d(out, taps, axis=-2, mode="nearest")


class GaussianSmooth(Denoiser):
    def __init__(self, std: float, channels: int | None = None):
        if not std > 0:
            raise ValueError("std must be positive")
        self.std = float(std)
        self.channels = channels

    def _apply(self, x):
        return gaussian_smooth(self.std, x)

    def __repr__(self):
        return f"GaussianSmooth(std={self.std})"


# ---------------------------------------------------------------------------
# Total-variation proximal map
# ---------------------------------------------------------------------------


def tv_norm(u) -> float:
    """Isotropic TV: sum over pixels and channels of the gradient's 2-norm."""
    g = grad_forward(u)
    c2, h, w = g.shape
    g = g.reshape(c2 // 2, 2, h, w)
    return float(np.sum(np.sqrt(g[:, 0] ** 2 + g[:, 1] ** 2)))


def _neg_div(qx: np.ndarray, qy: np.ndarray, out: np.ndarray) -> np.ndarray:
    """``D^T q`` for the Neumann forward-difference gradient, written into ``out``."""
    out[:] = 0.0
    out[:, :, :-1] -= qx[:, :, :-1]
    out[:, :, 1:] += qx[:, :, :-1]
    out[:, :-1, :] -= qy[:, :-1, :]
    out[:, 1:, :] += qy[:, :-1, :]
    return out


def tv_prox_iterates(lam: float, b, inner_iters: int = 500, inner_tol: float = 1e-8):
    """Yield the primal iterates of the dual projected-gradient TV solver.

    Solves ``min_u 1/2 ||u - b||^2 + lam * TV(u)`` through its dual
    ``min_{|q| <= lam} 1/2 ||b - D^T q||^2``: projected gradient steps of
    size 1/8 on ``q`` with Nesterov momentum. Stops once the relative dual
    change is at most ``inner_tol`` or after ``inner_iters`` steps. The
    primal iterate is ``u = b - D^T q`` and the last one yielded is the
    solver's answer.
    """
    b = np.asarray(b, dtype=np.float64)
    if lam < 0 or not np.isfinite(lam):
        raise ValueError("lambda must be finite and non-negative")
    if lam == 0:
        yield b.copy()
        return
    shape = b.shape
    qx, qy = np.zeros(shape), np.zeros(shape)
    rx, ry = np.zeros(shape), np.zeros(shape)
    gx, gy = np.zeros(shape), np.zeros(shape)
    tmp = np.empty(shape)
    u = b.copy()
    yield u
    t = 1.0
    for _ in range(inner_iters):
        # gradient step at the extrapolated point r
        v = b - _neg_div(rx, ry, tmp)
        gx[:, :, :-1] = v[:, :, 1:] - v[:, :, :-1]
        gy[:, :-1, :] = v[:, 1:, :] - v[:, :-1, :]
        nx = rx + 0.125 * gx
        ny = ry + 0.125 * gy
        with np.errstate(over="ignore"):  # subnormal lam: scale inf projects to 0
            scale = np.maximum(1.0, np.sqrt(nx * nx + ny * ny) / lam)
        nx /= scale
        ny /= scale
        dx, dy = nx - qx, ny - qy
        change = math.sqrt(float(np.vdot(dx, dx) + np.vdot(dy, dy)))
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        rx = nx + mom * dx
        ry = ny + mom * dy
        qx, qy, t = nx, ny, t_next
        u = b - _neg_div(qx, qy, tmp)
        yield u
        qnorm = math.sqrt(float(np.vdot(qx, qx) + np.vdot(qy, qy)))
        if change <= inner_tol * max(qnorm, 1e-12):
            return


def tv_prox_denoise(lam: float, b, inner_iters: int = 500, inner_tol: float = 1e-8) -> np.ndarray:
    """Proximal map of ``lam * TV`` (see :func:`tv_prox_iterates`)."""
    u = None
    for u in tv_prox_iterates(lam, b, inner_iters, inner_tol):
        pass
    return u


class TvProx(Denoiser):
    """Exact-prox reference denoiser ``prox_{lam * TV}``.

    With ``inner_tol=0`` the inner loop always runs ``inner_iters`` steps,
    which makes the map a fixed continuous function of its input.
    """

    def __init__(self, lam: float, inner_iters: int = 500, inner_tol: float = 1e-8, channels: int | None = None):
        if lam < 0 or not np.isfinite(lam):
            raise ValueError("lambda must be finite and non-negative")
        self.lam = float(lam)
        self.inner_iters = int(inner_iters)
        self.inner_tol = float(inner_tol)
        self.channels = channels

    def _apply(self, x):
        return tv_prox_denoise(self.lam, x, self.inner_iters, self.inner_tol)

    def __repr__(self):
        return f"TvProx(lam={self.lam}, inner_iters={self.inner_iters}, inner_tol={self.inner_tol})"


# ---------------------------------------------------------------------------
# Non-local means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NlmParams:
    """Non-local means settings.

    ``h`` is the filtering strength and ``sigma`` the noise level subtracted
    from patch distances (0 disables the correction).
    """

    patch_radius: int = 1
    search_radius: int = 5
    h: float = 0.1
    sigma: float = 0.0

    def __post_init__(self):
        if self.patch_radius < 1 or self.search_radius < 1:
            raise ValueError("NLM radii must be >= 1")
        if not (self.h > 0 and np.isfinite(self.h)) and self.h != math.inf:
            raise ValueError("NLM strength h must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def _box_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Sum over (2r+1)^2 windows, valid region only."""
    s = np.cumsum(np.cumsum(a, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    n = 2 * r + 1
    return s[n:, n:] - s[:-n, n:] - s[n:, :-n] + s[:-n, :-n]


def nlm_denoise(p: NlmParams, x) -> np.ndarray:
    """Pixelwise non-local means with reflect-padded borders.

    The patch distance ``d2`` is the mean squared difference over the patch
    and all channels; weights are ``exp(-max(0, d2 - 2 sigma^2) / h^2)``,
    the center pixel gets the largest weight among its neighbours, and each
    pixel's weights are normalized to sum to one.
    """
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    pr, sr = p.patch_radius, p.search_radius
    if min(h, w) < 2 * pr + 1:
        raise ValueError(f"image {w}x{h} smaller than the {2 * pr + 1}x{2 * pr + 1} patch window")
    pad = sr + pr
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
    # patch centers live in rows/cols [pr, pr + h) of ``ref``
    ref = xp[:, sr : sr + h + 2 * pr, sr : sr + w + 2 * pr]
    npatch = (2 * pr + 1) ** 2 * c
    h2 = p.h * p.h
    inv_h2 = 0.0 if math.isinf(p.h) else (math.inf if h2 == 0.0 else 1.0 / h2)
    bias = 2.0 * p.sigma * p.sigma

    num = np.zeros((c, h, w))
    den = np.zeros((h, w))
    wmax = np.zeros((h, w))
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            if dy == 0 and dx == 0:
                continue
            other = xp[:, sr + dy : sr + dy + h + 2 * pr, sr + dx : sr + dx + w + 2 * pr]
            diff = ref - other
            d2 = _box_sum(np.sum(diff * diff, axis=0), pr) / npatch
            excess = np.maximum(d2 - bias, 0.0)
            wgt = (excess == 0).astype(np.float64) if math.isinf(inv_h2) else np.exp(-excess * inv_h2)
            num += wgt * xp[:, pad + dy : pad + dy + h, pad + dx : pad + dx + w]
            den += wgt
            np.maximum(wmax, wgt, out=wmax)
    num += wmax * x
    den += wmax
    # every weight underflowed: keep the input pixel
    safe = den > 0
    return np.where(safe, num / np.where(safe, den, 1.0), x)


class NonLocalMeans(Denoiser):
    def __init__(self, params: NlmParams | None = None, channels: int | None = None):
        self.params = params if params is not None else NlmParams()
        self.channels = channels

    def _apply(self, x):
        return nlm_denoise(self.params, x)

    def __repr__(self):
        return f"NonLocalMeans({self.params})"

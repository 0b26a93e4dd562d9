"""Linear operators with exact adjoints.

Forward models (circular blur, Bayer sampling) and the regularization
operators (Neumann gradient, cross-channel gradient differences), all on
planar ``(C, H, W)`` float64 images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .image import make_rng

__all__ = [
    "ConvKernel",
    "gaussian_kernel",
    "box_kernel",
    "motion_kernel",
    "delta_kernel",
    "read_kernel",
    "write_kernel",
    "parse_kernel_spec",
    "conv_forward",
    "conv_adjoint",
    "BayerPattern",
    "bayer_forward",
    "bayer_adjoint",
    "grad_forward",
    "grad_adjoint",
    "channel_grad_diff_forward",
    "channel_grad_diff_adjoint",
    "CHANNEL_PAIRS",
    "LinearOperator",
    "Identity",
    "CircularConvolution",
    "BayerMask",
    "Gradient",
    "ChannelGradientDifference",
    "Stacked",
    "operator_norm",
]


# ---------------------------------------------------------------------------
# Convolution kernels
# ---------------------------------------------------------------------------


class ConvKernel:
    """Centered 2-D convolution kernel with odd side lengths.

    Parameters
    ----------
    taps : array_like, shape (kheight, kwidth)
        Row-major weights; the center tap sits at ``(kheight // 2, kwidth // 2)``.
    normalize : bool
        Rescale the taps to sum to one (default).
    """

    def __init__(self, taps, normalize: bool = True):
        taps = np.array(taps, dtype=np.float64)
        if taps.ndim != 2:
            raise ValueError("kernel taps must be a 2-D array")
        kh, kw = taps.shape
        if kh % 2 == 0 or kw % 2 == 0:
            raise ValueError(f"kernel sides must be odd, got {kw}x{kh}")
        if not np.all(np.isfinite(taps)):
            raise ValueError("kernel taps must be finite")
        if normalize:
            total = taps.sum()
            if total == 0:
                raise ValueError("cannot normalize a kernel whose taps sum to zero")
            taps = taps / total
        taps.setflags(write=False)
        self.taps = taps

    @property
    def kwidth(self) -> int:
        return self.taps.shape[1]

    @property
    def kheight(self) -> int:
        return self.taps.shape[0]

    def flipped(self) -> "ConvKernel":
        return ConvKernel(self.taps[::-1, ::-1], normalize=False)

    def spectrum(self, shape: tuple[int, int]) -> np.ndarray:
        """Real-FFT spectrum of the kernel zero-embedded in an ``shape`` grid."""
        h, w = shape
        if self.kheight > h or self.kwidth > w:
            raise ValueError(f"kernel {self.kwidth}x{self.kheight} larger than image {w}x{h}")
        grid = np.zeros((h, w))
        ch, cw = self.kheight // 2, self.kwidth // 2
        rows = (np.arange(self.kheight) - ch) % h
        cols = (np.arange(self.kwidth) - cw) % w
        # np.add.at keeps taps that wrap onto the same cell (kernel side == image side)
        np.add.at(grid, (rows[:, None], cols[None, :]), self.taps)
        return np.fft.rfft2(grid)

    def __eq__(self, other):
        return isinstance(other, ConvKernel) and np.array_equal(self.taps, other.taps)

    def __repr__(self):
        return f"ConvKernel({self.kwidth}x{self.kheight})"


def gaussian_kernel(std: float, size: int | None = None) -> ConvKernel:
    """Sampled, normalized Gaussian; ``size`` defaults to ``2*ceil(3*std)+1``."""
    if not std > 0:
        raise ValueError("std must be positive")
    if size is None:
        size = 2 * math.ceil(3 * std) + 1
    r = np.arange(size) - size // 2
    g = np.exp(-(r**2) / (2.0 * std * std))
    return ConvKernel(np.outer(g, g))


def box_kernel(size: int) -> ConvKernel:
    return ConvKernel(np.ones((size, size)))


def delta_kernel() -> ConvKernel:
    return ConvKernel([[1.0]])


def motion_kernel(length: float, angle: float = 0.0, size: int | None = None) -> ConvKernel:
    """Linear motion blur: a line segment of ``length`` pixels at ``angle`` degrees.

    The segment is rasterized by supersampling 16 points per pixel of length
    with bilinear splatting.
    """
    if not length > 0:
        raise ValueError("length must be positive")
    if size is None:
        size = 2 * math.ceil(length / 2) + 1
    c = size // 2
    taps = np.zeros((size, size))
    n = max(2, int(16 * length))
    t = np.linspace(-length / 2, length / 2, n)
    theta = math.radians(angle)
    xs = c + t * math.cos(theta)
    ys = c - t * math.sin(theta)
    for x, y in zip(xs, ys):
        x0, y0 = math.floor(x), math.floor(y)
        fx, fy = x - x0, y - y0
        for dy, wy in ((0, 1 - fy), (1, fy)):
            for dx, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + dy, x0 + dx
                if 0 <= yy < size and 0 <= xx < size:
                    taps[yy, xx] += wy * wx
    return ConvKernel(taps)


def read_kernel(path, normalize: bool = True) -> ConvKernel:
    """Read the text format ``KERNEL w h`` followed by ``w*h`` reals, row-major."""
    with open(path) as fh:
        tokens = fh.read().split()
    if len(tokens) < 3 or tokens[0] != "KERNEL":
        raise ValueError(f"{path}: missing 'KERNEL w h' header")
    w, h = int(tokens[1]), int(tokens[2])
    values = tokens[3:]
    if len(values) != w * h:
        raise ValueError(f"{path}: expected {w * h} taps, found {len(values)}")
    taps = np.array([float(v) for v in values]).reshape(h, w)
    return ConvKernel(taps, normalize=normalize)


def write_kernel(path, kernel: ConvKernel) -> None:
    with open(path, "w") as fh:
        fh.write(f"KERNEL {kernel.kwidth} {kernel.kheight}\n")
        for row in kernel.taps:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def parse_kernel_spec(spec: str) -> ConvKernel:
    """Build a kernel from a short spec string.

    ``gaussian:STD[:SIZE]``, ``box:SIZE``, ``motion:LENGTH[:ANGLE]``,
    ``delta``, or ``file:PATH``.
    """
    kind, _, rest = spec.partition(":")
    args = rest.split(":") if rest else []
    try:
        if kind == "gaussian" and 1 <= len(args) <= 2:
            size = int(args[1]) if len(args) == 2 else None
            return gaussian_kernel(float(args[0]), size)
        if kind == "box" and len(args) == 1:
            return box_kernel(int(args[0]))
        if kind == "motion" and 1 <= len(args) <= 2:
            return motion_kernel(float(args[0]), float(args[1]) if len(args) == 2 else 0.0)
        if kind == "delta" and not args:
            return delta_kernel()
    except ValueError as exc:
        raise ValueError(f"bad kernel spec {spec!r}: {exc}") from exc
    if kind == "file" and rest:
        return read_kernel(rest)
    raise ValueError(f"bad kernel spec {spec!r}")


def _check_image(x, name="x") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"{name} must be a (channels, height, width) array, got shape {x.shape}")
    return x


def _apply_spectrum(spec: np.ndarray, x: np.ndarray) -> np.ndarray:
    h, w = x.shape[-2:]
    return np.fft.irfft2(np.fft.rfft2(x) * spec, s=(h, w))


def conv_forward(k: ConvKernel, x) -> np.ndarray:
    """Circular convolution of every channel of ``x`` with ``k``."""
    x = _check_image(x)
    return _apply_spectrum(k.spectrum(x.shape[1:]), x)


def conv_adjoint(k: ConvKernel, y) -> np.ndarray:
    """Circular convolution with the 180-degree flipped kernel."""
    y = _check_image(y, "y")
    return _apply_spectrum(np.conj(k.spectrum(y.shape[1:])), y)


# ---------------------------------------------------------------------------
# Bayer sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BayerPattern:
    """2x2 color filter layout; entry ``layout[i % 2][j % 2]`` is the channel seen at (i, j)."""

    layout: tuple[tuple[int, int], tuple[int, int]] = ((0, 1), (1, 2))

    def __post_init__(self):
        layout = tuple(tuple(int(c) for c in row) for row in self.layout)
        if len(layout) != 2 or any(len(r) != 2 for r in layout):
            raise ValueError("Bayer layout must be 2x2")
        if any(c not in (0, 1, 2) for r in layout for c in r):
            raise ValueError("Bayer layout entries must be 0, 1 or 2")
        object.__setattr__(self, "layout", layout)

    @classmethod
    def from_name(cls, name: str) -> "BayerPattern":
        idx = {"R": 0, "G": 1, "B": 2}
        name = name.upper()
        if len(name) != 4 or any(ch not in idx for ch in name):
            raise ValueError(f"bad Bayer pattern name {name!r}")
        c = [idx[ch] for ch in name]
        return cls(((c[0], c[1]), (c[2], c[3])))

    @property
    def name(self) -> str:
        return "".join("RGB"[c] for row in self.layout for c in row)

    def channel_map(self, shape: tuple[int, int]) -> np.ndarray:
        """Integer (H, W) array with the channel index sampled at each pixel."""
        h, w = shape
        tile = np.array(self.layout)
        return np.tile(tile, (h // 2, w // 2))

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        """0/1 selection mask of shape (3, H, W)."""
        _check_even(shape)
        cmap = self.channel_map(shape)
        return (cmap[np.newaxis] == np.arange(3)[:, None, None]).astype(np.float64)


def _check_even(shape) -> None:
    h, w = shape
    if h % 2 or w % 2:
        raise ValueError(f"Bayer sampling needs even dimensions, got {w}x{h}")


def bayer_forward(p: BayerPattern, x) -> np.ndarray:
    """Sample a 3-channel image into a 1-channel mosaic."""
    x = _check_image(x)
    if x.shape[0] != 3:
        raise ValueError(f"Bayer forward needs 3 channels, got {x.shape[0]}")
    _check_even(x.shape[1:])
    cmap = p.channel_map(x.shape[1:])
    return np.take_along_axis(x, cmap[np.newaxis], axis=0)


def bayer_adjoint(p: BayerPattern, m) -> np.ndarray:
    """Scatter a mosaic into its source channels, zeros elsewhere."""
    m = _check_image(m, "m")
    if m.shape[0] != 1:
        raise ValueError(f"Bayer adjoint needs a 1-channel mosaic, got {m.shape[0]}")
    return p.mask(m.shape[1:]) * m


# ---------------------------------------------------------------------------
# Gradient operators (Neumann boundary)
# ---------------------------------------------------------------------------


def grad_forward(x) -> np.ndarray:
    """Forward differences per channel.

    Output plane ``2c`` holds horizontal differences ``x[i, j+1] - x[i, j]``
    and plane ``2c+1`` vertical ones ``x[i+1, j] - x[i, j]``; differences
    across the last column/row are zero.
    """
    x = _check_image(x)
    c, h, w = x.shape
    g = np.zeros((c, 2, h, w))
    g[:, 0, :, :-1] = x[:, :, 1:] - x[:, :, :-1]
    g[:, 1, :-1, :] = x[:, 1:, :] - x[:, :-1, :]
    return g.reshape(2 * c, h, w)


def grad_adjoint(g) -> np.ndarray:
    """Negative divergence, the exact transpose of :func:`grad_forward`."""
    g = _check_image(g, "g")
    if g.shape[0] % 2:
        raise ValueError(f"gradient field needs an even channel count, got {g.shape[0]}")
    c2, h, w = g.shape
    g = g.reshape(c2 // 2, 2, h, w)
    gx, gy = g[:, 0], g[:, 1]
    out = np.zeros((c2 // 2, h, w))
    out[:, :, :-1] -= gx[:, :, :-1]
    out[:, :, 1:] += gx[:, :, :-1]
    out[:, :-1, :] -= gy[:, :-1, :]
    out[:, 1:, :] += gy[:, :-1, :]
    return out


# Ordered channel pairs of the cross-channel operator. Pair p occupies
# planes 2p (horizontal) and 2p+1 (vertical) of grad(x_c) - grad(x_c').
CHANNEL_PAIRS: tuple[tuple[int, int], ...] = ((0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1))


def channel_grad_diff_forward(x) -> np.ndarray:
    """Gradient differences between color channels, 12 planes.

    For each unordered pair (R,G), (R,B), (G,B) both orientations
    ``grad(x_c) - grad(x_c')`` and ``grad(x_c') - grad(x_c)`` are stored,
    in the order of :data:`CHANNEL_PAIRS`.
    """
    x = _check_image(x)
    if x.shape[0] != 3:
        raise ValueError(f"cross-channel operator needs 3 channels, got {x.shape[0]}")
    h, w = x.shape[1:]
    g = grad_forward(x).reshape(3, 2, h, w)
    out = np.stack([g[a] - g[b] for a, b in CHANNEL_PAIRS])
    return out.reshape(12, h, w)


def channel_grad_diff_adjoint(q) -> np.ndarray:
    q = _check_image(q, "q")
    if q.shape[0] != 12:
        raise ValueError(f"cross-channel field needs 12 planes, got {q.shape[0]}")
    h, w = q.shape[1:]
    q = q.reshape(6, 2, h, w)
    g = np.zeros((3, 2, h, w))
    for p, (a, b) in enumerate(CHANNEL_PAIRS):
        g[a] += q[p]
        g[b] -= q[p]
    return grad_adjoint(g.reshape(6, h, w))


# ---------------------------------------------------------------------------
# Operator objects
# ---------------------------------------------------------------------------


class LinearOperator:
    """Base class: a linear map between image shapes with an exact adjoint."""

    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]

    def forward(self, x):
        raise NotImplementedError

    def adjoint(self, y):
        raise NotImplementedError

    def __call__(self, x):
        return self.forward(x)


class Identity(LinearOperator):
    def __init__(self, shape: Sequence[int]):
        self.in_shape = self.out_shape = tuple(shape)

    def forward(self, x):
        return np.asarray(x, dtype=np.float64)

    adjoint = forward


class CircularConvolution(LinearOperator):
    """Per-channel circular convolution with a cached kernel spectrum."""

    def __init__(self, kernel: ConvKernel, shape: Sequence[int]):
        self.kernel = kernel
        self.in_shape = self.out_shape = tuple(shape)
        self.spectrum = kernel.spectrum(self.in_shape[1:])
        self.spectrum.setflags(write=False)

    def forward(self, x):
        return _apply_spectrum(self.spectrum, _check_image(x))

    def adjoint(self, y):
        return _apply_spectrum(np.conj(self.spectrum), _check_image(y, "y"))


class BayerMask(LinearOperator):
    def __init__(self, pattern: BayerPattern, shape: Sequence[int]):
        shape = tuple(shape)
        if len(shape) == 2:
            shape = (3, *shape)
        if shape[0] != 3:
            raise ValueError("Bayer operator acts on 3-channel images")
        self.pattern = pattern
        self.in_shape = shape
        self.out_shape = (1, *shape[1:])
        self.mask = pattern.mask(shape[1:])
        self.mask.setflags(write=False)

    def forward(self, x):
        return bayer_forward(self.pattern, x)

    def adjoint(self, y):
        return bayer_adjoint(self.pattern, y)


class Gradient(LinearOperator):
    def __init__(self, shape: Sequence[int]):
        c, h, w = shape
        self.in_shape = (c, h, w)
        self.out_shape = (2 * c, h, w)

    def forward(self, x):
        return grad_forward(x)

    def adjoint(self, y):
        return grad_adjoint(y)


class ChannelGradientDifference(LinearOperator):
    def __init__(self, shape: Sequence[int]):
        c, h, w = shape
        if c != 3:
            raise ValueError("cross-channel operator acts on 3-channel images")
        self.in_shape = (3, h, w)
        self.out_shape = (12, h, w)

    def forward(self, x):
        return channel_grad_diff_forward(x)

    def adjoint(self, y):
        return channel_grad_diff_adjoint(y)


@dataclass
class Stacked(LinearOperator):
    """Vertical stack ``[A_1; A_2; ...]``; forward returns a tuple of outputs."""

    ops: Sequence[LinearOperator] = field(default_factory=list)

    def __post_init__(self):
        if not self.ops:
            raise ValueError("Stacked needs at least one operator")
        shapes = {op.in_shape for op in self.ops}
        if len(shapes) != 1:
            raise ValueError(f"stacked operators disagree on input shape: {shapes}")
        self.in_shape = self.ops[0].in_shape
        self.out_shape = tuple(op.out_shape for op in self.ops)

    def forward(self, x):
        return tuple(op.forward(x) for op in self.ops)

    def adjoint(self, ys):
        out = self.ops[0].adjoint(ys[0])
        for op, y in zip(self.ops[1:], ys[1:]):
            out = out + op.adjoint(y)
        return out


def _sqnorm(v) -> float:
    if isinstance(v, tuple):
        return sum(_sqnorm(p) for p in v)
    return float(np.vdot(v, v).real)


def operator_norm(op: LinearOperator, iters: int = 100, seed: int = 0, tol: float = 1e-12) -> float:
    """Spectral norm estimate by power iteration on ``A^T A``.

    The returned Rayleigh-quotient estimate never decreases with more
    iterations (up to round-off) and stops early once its relative change
    drops to ``tol``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = make_rng(seed).standard_normal(op.in_shape)
    x /= math.sqrt(_sqnorm(x))
    est = 0.0
    for _ in range(iters):
        ax = op.forward(x)
        new = math.sqrt(_sqnorm(ax))
        if new == 0.0:
            return 0.0
        done = abs(new - est) <= tol * new
        est = max(est, new)
        if done:
            break
        x = op.adjoint(ax)
        x /= math.sqrt(_sqnorm(x))
    return est

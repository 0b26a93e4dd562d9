"""Inference for residual 3x3 convolutional denoisers stored as PNPW files.

PNPW layout (all integers little-endian)::

    magic          4 bytes  b"PNPW"
    version        u32      1
    input_channels u32      1 or 3
    residual       u8       0 or 1; if 1 the model returns x - net(x)
    layer_count    u32
    per layer:
        in_ch      u32
        out_ch     u32
        relu       u8       0 or 1
        weights    f32[out_ch][in_ch][3][3]
        biases     f32[out_ch]

Layers are cross-correlations with zero padding, the convention of the
usual training frameworks, so exported tensors can be written as-is.
Batch normalization is not part of the format; fold it into the preceding
convolution before export::

    s  = bn_gamma / sqrt(bn_running_var + bn_eps)
    W' = W * s[:, None, None, None]
    b' = (b - bn_running_mean) * s + bn_beta

A DnCNN-style denoiser is 17 such layers of width 64 with ReLU on all but
the last, but the format accepts any depth and width.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .denoisers import Denoiser

__all__ = [
    "WeightsFormatError",
    "ConvLayer",
    "CnnModel",
    "CnnDenoiser",
    "MAGIC",
    "VERSION",
    "load_model",
    "save_model",
    "model_from_bytes",
    "model_to_bytes",
    "infer",
    "random_model",
    "layer_table",
]

MAGIC = b"PNPW"
VERSION = 1


class WeightsFormatError(ValueError):
    """Malformed or inconsistent PNPW data."""


@dataclass
class ConvLayer:
    weights: np.ndarray  # float32, (out_ch, in_ch, 3, 3)
    bias: np.ndarray  # float32, (out_ch,)
    relu: bool = True

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)
        self.bias = np.asarray(self.bias, dtype=np.float32)
        if self.weights.ndim != 4 or self.weights.shape[2:] != (3, 3):
            raise WeightsFormatError(f"layer weights must be (out, in, 3, 3), got {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise WeightsFormatError(f"bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise WeightsFormatError("non-finite weights")

    @property
    def in_ch(self) -> int:
        return self.weights.shape[1]

    @property
    def out_ch(self) -> int:
        return self.weights.shape[0]


@dataclass
class CnnModel:
    layers: list[ConvLayer] = field(default_factory=list)
    residual: bool = True
    input_channels: int = 1

    def __post_init__(self):
        validate_model(self)


def validate_model(m: CnnModel) -> None:
    if not m.layers:
        raise WeightsFormatError("model has no layers")
    if m.input_channels < 1:
        raise WeightsFormatError("input_channels must be >= 1")
    ch = m.input_channels
    for i, layer in enumerate(m.layers):
        if layer.in_ch != ch:
            raise WeightsFormatError(f"channel chain broken at layer {i}: expects {layer.in_ch} inputs, gets {ch}")
        ch = layer.out_ch
    if ch != m.input_channels:
        raise WeightsFormatError(f"last layer outputs {ch} channels, model input has {m.input_channels}")
    if m.layers[-1].relu:
        raise WeightsFormatError("last layer must not apply ReLU")


def model_to_bytes(m: CnnModel) -> bytes:
    parts = [MAGIC, struct.pack("<IIBI", VERSION, m.input_channels, int(m.residual), len(m.layers))]
    for layer in m.layers:
        parts.append(struct.pack("<IIB", layer.in_ch, layer.out_ch, int(layer.relu)))
        parts.append(layer.weights.astype("<f4").tobytes())
        parts.append(layer.bias.astype("<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WeightsFormatError("truncated weights file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def _flag(value: int, what: str) -> bool:
    if value not in (0, 1):
        raise WeightsFormatError(f"{what} flag must be 0 or 1, got {value}")
    return bool(value)


def model_from_bytes(data: bytes) -> CnnModel:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise WeightsFormatError("bad magic, not a PNPW file")
    version, in_channels, residual, count = r.unpack("<IIBI")
    if version != VERSION:
        raise WeightsFormatError(f"unsupported PNPW version {version}")
    layers = []
    for _ in range(count):
        cin, cout, relu = r.unpack("<IIB")
        w = np.frombuffer(r.take(4 * cout * cin * 9), dtype="<f4").reshape(cout, cin, 3, 3)
        b = np.frombuffer(r.take(4 * cout), dtype="<f4")
        layers.append(ConvLayer(w.astype(np.float32), b.astype(np.float32), _flag(relu, "relu")))
    if r.pos != len(data):
        raise WeightsFormatError(f"{len(data) - r.pos} trailing bytes after last layer")
    return CnnModel(layers, _flag(residual, "residual"), in_channels)


def load_model(path) -> CnnModel:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())


def save_model(m: CnnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(m))


def _conv3x3(x: np.ndarray, layer: ConvLayer) -> np.ndarray:
    _, h, w = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    wts = layer.weights.astype(np.float64)
    out = np.empty((layer.out_ch, h, w))
    out[:] = layer.bias.astype(np.float64)[:, None, None]
    for a in range(3):
        for b in range(3):
            out += np.tensordot(wts[:, :, a, b], xp[:, a : a + h, b : b + w], axes=1)
    return out


def infer(m: CnnModel, x) -> np.ndarray:
    """Forward pass in float64; returns ``x - net(x)`` for residual models."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[0] != m.input_channels:
        raise ValueError(f"model expects {m.input_channels} input channels, got shape {x.shape}")
    a = x
    for layer in m.layers:
        a = _conv3x3(a, layer)
        if layer.relu:
            np.maximum(a, 0.0, out=a)
    return x - a if m.residual else a


def random_model(
    input_channels: int = 1,
    widths=(8, 8),
    residual: bool = True,
    scale: float = 0.1,
    seed: int = 0,
) -> CnnModel:
    """Random model with hidden ``widths``; handy for tests and demos."""
    rng = np.random.default_rng(seed)
    chans = [input_channels, *widths, input_channels]
    layers = []
    for i, (cin, cout) in enumerate(zip(chans[:-1], chans[1:])):
        w = scale * rng.standard_normal((cout, cin, 3, 3))
        b = scale * rng.standard_normal(cout)
        layers.append(ConvLayer(w, b, relu=i < len(chans) - 2))
    return CnnModel(layers, residual, input_channels)


def layer_table(m: CnnModel) -> str:
    lines = [
        f"input_channels {m.input_channels}  residual {int(m.residual)}  layers {len(m.layers)}",
        f"{'layer':>5} {'in':>5} {'out':>5} {'relu':>5} {'params':>8}",
    ]
    total = 0
    for i, layer in enumerate(m.layers):
        n = layer.weights.size + layer.bias.size
        total += n
        lines.append(f"{i:>5} {layer.in_ch:>5} {layer.out_ch:>5} {int(layer.relu):>5} {n:>8}")
    lines.append(f"total parameters {total}")
    return "\n".join(lines)


class CnnDenoiser(Denoiser):
    def __init__(self, model: CnnModel):
        self.model = model
        self.channels = model.input_channels

    def _apply(self, x):
        return infer(self.model, x)

    def __repr__(self):
        return f"CnnDenoiser({len(self.model.layers)} layers)"

"""Binary PGM/PPM (P5/P6) and PFM reading and writing.

PNM files are quantized on write (8-bit or 16-bit big-endian) and scaled
by ``1/maxval`` on read. PFM stores float32 samples and round-trips any
float32-representable image exactly, which is what the tests rely on.
"""

from __future__ import annotations

import os
import re

import numpy as np

__all__ = ["ImageFormatError", "read_image", "write_image", "read_pnm", "write_pnm", "read_pfm", "write_pfm", "read_npy", "write_npy"]


class ImageFormatError(ValueError):
    """Raised for malformed or unsupported image files."""


_PNM_MAGIC = {b"P5": 1, b"P6": 3}


def _pnm_header(data: bytes):
    # magic, width, height, maxval, separated by whitespace and comments
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < 4:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(data[start:pos])
    if pos >= n or not data[pos : pos + 1].isspace():
        raise ImageFormatError("missing whitespace after PNM header")
    return tokens, pos + 1


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic = data[:2]
    if magic not in _PNM_MAGIC:
        raise ImageFormatError(f"{path}: unknown magic number {magic!r}")
    tokens, offset = _pnm_header(data)
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad PNM header") from exc
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"{path}: bad PNM dimensions or maxval")
    channels = _PNM_MAGIC[magic]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    raw = data[offset:]
    if len(raw) < count * dtype.itemsize:
        raise ImageFormatError(f"{path}: truncated raster")
    samples = np.frombuffer(raw, dtype=dtype, count=count).astype(np.float64)
    img = samples.reshape(height, width, channels).transpose(2, 0, 1)
    return np.ascontiguousarray(img / maxval)


def write_pnm(path, image, bits: int = 8) -> None:
    """Write a 1-channel image as P5 or a 3-channel image as P6."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[np.newaxis]
    if img.shape[0] not in (1, 3):
        raise ImageFormatError(f"PNM supports 1 or 3 channels, got {img.shape[0]}")
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    maxval = 255 if bits == 8 else 65535
    dtype = np.dtype("u1") if bits == 8 else np.dtype(">u2")
    q = np.rint(np.clip(img, 0.0, 1.0) * maxval).astype(dtype)
    magic = b"P5" if img.shape[0] == 1 else b"P6"
    h, w = img.shape[1:]
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n%d\n" % (magic, w, h, maxval))
        fh.write(q.transpose(1, 2, 0).tobytes())


_PFM_HEADER = re.compile(rb"^(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s")


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] not in (b"PF", b"Pf"):
        raise ImageFormatError(f"{path}: unknown magic number {data[:2]!r}")
    m = _PFM_HEADER.match(data)
    if m is None:
        raise ImageFormatError(f"{path}: bad PFM header")
    channels = 3 if m.group(1) == b"PF" else 1
    width, height = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError as exc:
        raise ImageFormatError(f"{path}: bad PFM scale") from exc
    if scale == 0 or width < 1 or height < 1:
        raise ImageFormatError(f"{path}: bad PFM header")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    count = width * height * channels
    raw = data[m.end() :]
    if len(raw) < count * 4:
        raise ImageFormatError(f"{path}: truncated raster")
    samples = np.frombuffer(raw, dtype=dtype, count=count).astype(np.float64)
    # PFM rows run bottom to top
    img = samples.reshape(height, width, channels)[::-1].transpose(2, 0, 1)
    return np.ascontiguousarray(img)


def write_pfm(path, image) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[np.newaxis]
    if img.shape[0] not in (1, 3):
        raise ImageFormatError(f"PFM supports 1 or 3 channels, got {img.shape[0]}")
    magic = b"PF" if img.shape[0] == 3 else b"Pf"
    h, w = img.shape[1:]
    raster = img.transpose(1, 2, 0)[::-1].astype("<f4")
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n-1.0\n" % (magic, w, h))
        fh.write(raster.tobytes())


def read_npy(path) -> np.ndarray:
    """Float64 (C, H, W) array saved with :func:`write_npy`."""
    try:
        img = np.load(path, allow_pickle=False)
    except ValueError as exc:
        raise ImageFormatError(f"{path}: {exc}") from None
    if img.ndim == 2:
        img = img[np.newaxis]
    if img.ndim != 3 or not np.issubdtype(img.dtype, np.floating):
        raise ImageFormatError(f"{path}: expected a float (C, H, W) array, got {img.dtype} {img.shape}")
    return img.astype(np.float64)


def write_npy(path, image) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[np.newaxis]
    with open(path, "wb") as fh:
        np.save(fh, img, allow_pickle=False)


def read_image(path) -> np.ndarray:
    """Read PGM, PPM, PFM or NPY, dispatching on the magic number."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in _PNM_MAGIC:
        return read_pnm(path)
    if magic in (b"PF", b"Pf"):
        return read_pfm(path)
    if magic == b"\x93N":
        return read_npy(path)
    raise ImageFormatError(f"{path}: unknown magic number {magic!r}")


def write_image(path, image, bits: int = 8) -> None:
    """Write by extension: ``.pfm`` as float32, ``.npy`` as lossless
    float64, anything else as PGM/PPM."""
    ext = os.fspath(path).lower()
    if ext.endswith(".pfm"):
        write_pfm(path, image)
    elif ext.endswith(".npy"):
        write_npy(path, image)
    else:
        write_pnm(path, image, bits=bits)

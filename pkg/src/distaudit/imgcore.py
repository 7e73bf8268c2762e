"""Image container, lossless PGM/PPM I/O, PNG reading and resampling."""
from __future__ import annotations

import hashlib
import os
import struct
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ImageFormatError

MAX_PIXELS = 1 << 28

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class Image:
    """Immutable 8-bit raster with 1 (gray) or 3 (RGB) interleaved channels.

    The samples live in a read-only ``uint8`` array of shape
    ``(height, width, channels)``.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.asarray(data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (h, w, 1|3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image dimensions must be >= 1")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_bytes(cls, width, height, channels, pixels):
        if width < 1 or height < 1:
            raise ValueError("image dimensions must be >= 1")
        if channels not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {channels}")
        pixels = bytes(pixels)
        if len(pixels) != width * height * channels:
            raise ValueError(
                f"pixel buffer has {len(pixels)} bytes, expected {width * height * channels}"
            )
        arr = np.frombuffer(pixels, dtype=np.uint8).reshape(height, width, channels)
        return cls(arr)

    @property
    def data(self):
        return self._data

    @property
    def width(self):
        return self._data.shape[1]

    @property
    def height(self):
        return self._data.shape[0]

    @property
    def channels(self):
        return self._data.shape[2]

    @property
    def pixels(self):
        return self._data.tobytes()

    def sha256(self):
        h = hashlib.sha256()
        h.update(struct.pack("<III", self.width, self.height, self.channels))
        h.update(self._data.tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self._data.shape == other._data.shape and np.array_equal(self._data, other._data)

    def __hash__(self):
        return hash((self._data.shape, self._data.tobytes()))

    def __repr__(self):
        return f"Image({self.width}x{self.height}x{self.channels})"


# -- file I/O -----------------------------------------------------------------


def _pnm_tokens(buf, count):
    """Read ``count`` whitespace-separated header tokens; return them and the data offset."""
    tokens = []
    pos = 2
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos] in b" \t\r\n":
            pos += 1
        if pos < n and buf[pos] == ord("#"):
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < n and buf[pos] not in b" \t\r\n#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PNM header")
        tokens.append(buf[start:pos])
    if pos >= n or buf[pos] not in b" \t\r\n":
        raise ImageFormatError("malformed PNM header")
    return tokens, pos + 1


def _read_pnm(buf):
    magic = buf[:2]
    channels = {b"P5": 1, b"P6": 3}[magic]
    tokens, offset = _pnm_tokens(buf, 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ImageFormatError("non-numeric PNM header field") from None
    if width < 1 or height < 1:
        raise ImageFormatError(f"invalid dimensions {width}x{height}")
    if width * height > MAX_PIXELS:
        raise ImageFormatError(f"dimension overflow: {width}x{height}")
    if maxval > 255:
        raise ImageFormatError(f"unsupported bit depth (maxval {maxval})")
    if maxval != 255:
        raise ImageFormatError(f"unsupported maxval {maxval}; only 255 is accepted")
    size = width * height * channels
    data = buf[offset:offset + size]
    if len(data) != size:
        raise ImageFormatError(f"truncated pixel data: {len(data)} of {size} bytes")
    return Image.from_bytes(width, height, channels, data)


def _read_png(path, buf):
    # Pillow silently narrows 16-bit truecolor, so inspect IHDR ourselves.
    if len(buf) < 33 or buf[12:16] != b"IHDR":
        raise ImageFormatError("malformed PNG header")
    width, height, depth, color_type = struct.unpack(">IIBB", buf[16:26])
    if depth != 8:
        raise ImageFormatError(f"unsupported bit depth {depth}")
    if color_type not in (0, 2):
        raise ImageFormatError(f"unsupported color type {color_type}")
    if width * height > MAX_PIXELS:
        raise ImageFormatError(f"dimension overflow: {width}x{height}")
    from PIL import Image as PILImage

    try:
        with PILImage.open(path) as im:
            im.load()
            arr = np.asarray(im, dtype=np.uint8)
    except OSError as exc:
        raise ImageFormatError(f"unreadable PNG: {exc}") from exc
    return Image(arr)


def load_image(path):
    """Read a PGM (P5), PPM (P6) or 8-bit gray/RGB PNG file.

    Raises:
        ImageFormatError: on malformed files, unsupported bit depths or color types.
        OSError: if the file cannot be read.
    """
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] in (b"P5", b"P6"):
        return _read_pnm(buf)
    if buf[:8] == _PNG_SIGNATURE:
        return _read_png(path, buf)
    raise ImageFormatError(f"unrecognised image format: {path}")


def save_image(img, path):
    """Write ``img`` as binary PGM (1 channel) or PPM (3 channels).

    The extension must agree with the channel count. The parent directory must
    already exist; a missing one surfaces as ``FileNotFoundError``.
    """
    path = Path(path)
    ext = path.suffix.lower()
    if ext not in (".pgm", ".ppm", ".pnm"):
        raise ImageFormatError(f"can only write .pgm/.ppm, got {path.name}")
    if (ext == ".pgm" and img.channels != 1) or (ext == ".ppm" and img.channels != 3):
        raise ImageFormatError(f"{ext} cannot hold a {img.channels}-channel image")
    magic = b"P5" if img.channels == 1 else b"P6"
    header = magic + f"\n{img.width} {img.height}\n255\n".encode("ascii")
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(img.pixels)
    os.replace(tmp, path)


def image_extension(img):
    return ".pgm" if img.channels == 1 else ".ppm"


# -- color --------------------------------------------------------------------


def to_grayscale(img):
    """Luma conversion with weights (0.299, 0.587, 0.114), rounded half-up."""
    if img.channels == 1:
        return img
    rgb = img.data.astype(np.float64)
    y = 0.299 * rgb[:, :, 0] + 0.587 * rgb[:, :, 1] + 0.114 * rgb[:, :, 2]
    return Image(kernels.round_clip_u8(y[:, :, None]))


# -- resampling ---------------------------------------------------------------


def _check_dims(out_w, out_h):
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target dimensions must be >= 1, got {out_w}x{out_h}")


@lru_cache(maxsize=256)
def area_taps(n_in, n_out):
    """Tap table for area averaging along one axis.

    Output cell ``o`` covers source interval ``[o*s, (o+1)*s)`` with
    ``s = n_in / n_out``; each touched source pixel is weighted by its overlap
    length divided by ``s``. Weights are computed exactly and rounded once.
    """
    scale = Fraction(n_in, n_out)
    rows = []
    for o in range(n_out):
        start, end = o * scale, (o + 1) * scale
        first = int(start)  # floor, start >= 0
        last = -(-end.numerator // end.denominator)  # ceil
        taps = []
        for i in range(first, min(last, n_in)):
            overlap = min(end, i + 1) - max(start, Fraction(i))
            if overlap > 0:
                taps.append((i, float(overlap / scale)))
        rows.append(taps)
    return _pack(rows)


@lru_cache(maxsize=256)
def bilinear_taps(n_in, n_out):
    """Tap table for linear interpolation with half-pixel centers."""
    rows = []
    scale = n_in / n_out
    for o in range(n_out):
        src = (o + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1.0)
        i0 = int(np.floor(src))
        frac = src - i0
        i1 = min(i0 + 1, n_in - 1)
        rows.append([(i0, 1.0 - frac), (i1, frac)])
    return _pack(rows)


def _pack(rows):
    width = max(len(r) for r in rows)
    idx = np.zeros((len(rows), width), dtype=np.intp)
    w = np.zeros((len(rows), width), dtype=np.float64)
    for o, taps in enumerate(rows):
        for k, (i, wt) in enumerate(taps):
            idx[o, k] = i
            w[o, k] = wt
    idx.flags.writeable = False
    w.flags.writeable = False
    return idx, w


def _resample(img, out_w, out_h, taps_fn, backend=None):
    _check_dims(out_w, out_h)
    if (out_w, out_h) == (img.width, img.height):
        return img
    rows = taps_fn(img.width, out_w) if out_w != img.width else None
    cols = taps_fn(img.height, out_h) if out_h != img.height else None
    out = kernels.separable(img.data, rows, cols, backend=backend)
    return Image(kernels.round_clip_u8(out, backend=backend))


def resize_area(img, out_w, out_h, backend=None):
    """Area-average resampling (each output is the mean of the region it covers)."""
    return _resample(img, out_w, out_h, area_taps, backend)


def resize_bilinear(img, out_w, out_h, backend=None):
    """Bilinear resampling with pixel centers at (x + 0.5, y + 0.5)."""
    return _resample(img, out_w, out_h, bilinear_taps, backend)

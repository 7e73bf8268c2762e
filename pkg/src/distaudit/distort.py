"""The six distortion operators and a dispatcher over DistortionSpec.

Every operator is a pure function of its inputs. The two stochastic ones draw
from a Philox4x64-10 stream whose key is derived from (master seed, item id,
spec), so outputs never depend on call order or thread scheduling.
"""
from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import SpecError
from .imgcore import Image, resize_area, resize_bilinear
from .landmarks import region_bbox
from .specs import (
    Brightness,
    DistortionSpec,
    GaussianBlur,
    GaussianNoise,
    Identity,
    Occlusion,
    Resolution,
    SaltPepper,
)

RNG_NAME = "philox4x64-10/box-muller/v1"
_SEED_PERSON = b"distaudit.v1"
_TWO_NEG53 = 2.0 ** -53


@dataclass(frozen=True)
class SeedContext:
    master_seed: int
    item_id: str

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2 ** 64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")

    def stream_seed(self, spec):
        """64-bit BLAKE2b digest of (master seed, item id, canonical spec)."""
        h = hashlib.blake2b(digest_size=8, person=_SEED_PERSON)
        item = self.item_id.encode("utf-8")
        key = spec.key().encode("utf-8")
        h.update(struct.pack("<QI", int(self.master_seed), len(item)))
        h.update(item)
        h.update(struct.pack("<I", len(key)))
        h.update(key)
        return int.from_bytes(h.digest(), "little")


def raw_stream(seed, n):
    """``n`` raw 64-bit draws of Philox4x64-10 with key (seed, 0).

    Blocks use counters 1, 2, 3, ... (numpy increments before generating), each
    yielding four draws.
    """
    bitgen = np.random.Philox(key=np.array([seed, 0], dtype=np.uint64))
    return np.asarray(bitgen.random_raw(n), dtype=np.uint64)


def uniforms(raw):
    """Map raw draws to doubles in [0, 1) using the top 53 bits."""
    return (raw >> np.uint64(11)).astype(np.float64) * _TWO_NEG53


def standard_normals(seed, n):
    """``n`` N(0, 1) draws via Box-Muller on consecutive (u1, u2) pairs."""
    pairs = (n + 1) // 2
    raw = raw_stream(seed, 2 * pairs)
    u1 = ((raw[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * _TWO_NEG53  # (0, 1]
    u2 = uniforms(raw[1::2])
    radius = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * math.pi * u2
    z = np.empty(2 * pairs, dtype=np.float64)
    z[0::2] = radius * np.cos(theta)
    z[1::2] = radius * np.sin(theta)
    return z[:n]


# -- Gaussian blur --------------------------------------------------------------


def kernel_size(sigma):
    """Filter width 2*ceil(2*sigma) + 1."""
    if not sigma > 0:
        raise SpecError(f"sigma must be > 0, got {sigma}", field="sigma")
    return 2 * math.ceil(2 * sigma) + 1


@lru_cache(maxsize=64)
def _kernel(sigma):
    n = kernel_size(sigma)
    r = n // 2
    raw = [math.exp(-(d * d) / (2.0 * sigma * sigma)) for d in range(-r, r + 1)]
    z = math.fsum(raw)
    return tuple(v / z for v in raw)


def gaussian_kernel(sigma):
    """Normalised 1-D Gaussian weights of length ``kernel_size(sigma)``."""
    return list(_kernel(float(sigma)))


def reflect101(i, n):
    """Mirror index ``i`` into [0, n) without repeating the edge sample."""
    if n == 1:
        return 0
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


@lru_cache(maxsize=256)
def blur_taps(n, sigma):
    weights = _kernel(sigma)
    r = len(weights) // 2
    idx = np.empty((n, len(weights)), dtype=np.intp)
    for o in range(n):
        for k in range(len(weights)):
            idx[o, k] = reflect101(o + k - r, n)
    w = np.broadcast_to(np.array(weights, dtype=np.float64), idx.shape).copy()
    idx.flags.writeable = False
    w.flags.writeable = False
    return idx, w


def gaussian_blur(img, sigma, backend=None):
    """Separable Gaussian blur: horizontal pass, vertical pass, one final rounding."""
    sigma = float(sigma)
    kernel_size(sigma)
    rows = blur_taps(img.width, sigma)
    cols = blur_taps(img.height, sigma)
    out = kernels.separable(img.data, rows, cols, backend=backend)
    return Image(kernels.round_clip_u8(out, backend=backend))


# -- point operators ------------------------------------------------------------


def adjust_brightness(img, beta):
    """Scale every sample by ``beta``, round half-up and clip to [0, 255]."""
    if beta < 0:
        raise SpecError(f"beta must be >= 0, got {beta}", field="beta")
    if beta == 1.0:
        return img
    out = np.floor(img.data.astype(np.float64) * float(beta) + 0.5)
    return Image(np.clip(out, 0, 255).astype(np.uint8))


def add_gaussian_noise(img, sigma, ctx):
    """Add one N(0, sigma^2) draw per sample, round half-up and clip."""
    if sigma < 0:
        raise SpecError(f"sigma must be >= 0, got {sigma}", field="sigma")
    if sigma == 0:
        return img
    seed = ctx.stream_seed(GaussianNoise(sigma))
    noise = standard_normals(seed, img.data.size).reshape(img.data.shape) * float(sigma)
    out = np.floor(img.data.astype(np.float64) + noise + 0.5)
    return Image(np.clip(out, 0, 255).astype(np.uint8))


def salt_pepper_masks(shape, p, seed):
    """Boolean (pepper, salt) masks with one uniform draw per pixel location."""
    u = uniforms(raw_stream(seed, shape[0] * shape[1])).reshape(shape)
    half = p / 2.0
    pepper = u < half
    salt = (u >= half) & (u < p)
    return pepper, salt


def add_salt_pepper(img, p, ctx):
    """Set whole pixels to 0 with probability p/2 and to 255 with probability p/2."""
    if not 0.0 <= p <= 1.0:
        raise SpecError(f"p must lie in [0, 1], got {p}", field="p")
    if p == 0:
        return img
    pepper, salt = salt_pepper_masks((img.height, img.width), float(p), ctx.stream_seed(SaltPepper(p)))
    out = img.data.copy()
    out[pepper] = 0
    out[salt] = 255
    return Image(out)


def reduce_resolution(img, w, h, restore=False, backend=None):
    """Area-downsample to ``w`` x ``h``; optionally upsample back bilinearly."""
    small = resize_area(img, w, h, backend=backend)
    if restore:
        return resize_bilinear(small, img.width, img.height, backend=backend)
    return small


def occlude(img, kps, region):
    """Black out the rectangle derived for ``region`` from the landmarks."""
    rect = region_bbox(kps, region, img.width, img.height)
    out = img.data.copy()
    out[rect.y0:rect.y1, rect.x0:rect.x1, :] = 0
    return Image(out)


def apply(img, spec, ctx=None, kps=None, restore=True, backend=None):
    """Apply one distortion described by ``spec``.

    ``kps`` is required for Occlusion and ignored otherwise. ``restore`` only
    affects Resolution: when set, the reduced image is returned at its original
    size.
    """
    if isinstance(spec, Identity):
        return img
    if isinstance(spec, Occlusion):
        if kps is None:
            raise SpecError("Occlusion requires keypoints", field="keypoints")
        return occlude(img, kps, spec.region)
    if isinstance(spec, GaussianBlur):
        return gaussian_blur(img, spec.sigma, backend=backend)
    if isinstance(spec, Brightness):
        return adjust_brightness(img, spec.beta)
    if isinstance(spec, GaussianNoise):
        return add_gaussian_noise(img, spec.sigma, _need_ctx(ctx))
    if isinstance(spec, SaltPepper):
        return add_salt_pepper(img, spec.p, _need_ctx(ctx))
    if isinstance(spec, Resolution):
        return reduce_resolution(img, spec.w, spec.h, restore=restore, backend=backend)
    if isinstance(spec, DistortionSpec):
        raise SpecError(f"unsupported distortion {spec.tag}")
    raise TypeError(f"expected a DistortionSpec, got {type(spec).__name__}")


def _need_ctx(ctx):
    if ctx is None:
        raise SpecError("stochastic distortions require a SeedContext", field="seed")
    return ctx

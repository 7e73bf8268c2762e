"""Distortion descriptions, their JSON form, and the default intensity grids."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields

from .errors import SpecError
from .landmarks import FaceRegion

BLUR_SIGMAS = (2.0, 2.2, 2.4, 2.6, 2.8, 3.0, 3.2, 3.4, 3.6, 3.8, 4.0)
BRIGHTNESS_BETAS = (1.0, 1.5, 2.0, 2.5, 3.0)
NOISE_SIGMAS = (10.0, 20.0, 30.0, 40.0)
SALT_PEPPER_PS = (0.03, 0.06, 0.09, 0.12, 0.15)
RESOLUTIONS = ((96, 96), (64, 64), (48, 48), (32, 32), (28, 28))


def _real(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpecError(f"{name} must be a number, got {value!r}", field=name)
    value = float(value)
    if not math.isfinite(value):
        raise SpecError(f"{name} must be finite", field=name)
    return value


def _pixels(value, name):
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise SpecError(f"{name} must be an integer >= 1, got {value!r}", field=name)
    return value


class DistortionSpec:
    """Base for the seven distortion variants."""

    tag = "Identity"

    def params(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self):
        params = {k: (v.value if isinstance(v, FaceRegion) else v) for k, v in self.params().items()}
        return {self.tag: params}

    def key(self):
        """Canonical serialization, stable across runs; used for seeding and cache keys."""
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def label(self):
        """Short intensity label for report rows."""
        raise NotImplementedError

    @property
    def family(self):
        return self.tag


@dataclass(frozen=True)
class Identity(DistortionSpec):
    tag = "Identity"

    def label(self):
        return "none"


@dataclass(frozen=True)
class Occlusion(DistortionSpec):
    region: FaceRegion
    tag = "Occlusion"

    def __post_init__(self):
        try:
            object.__setattr__(self, "region", FaceRegion.parse(self.region))
        except ValueError:
            raise SpecError(f"unknown region {self.region!r}", field="region") from None

    def label(self):
        return self.region.value


@dataclass(frozen=True)
class GaussianBlur(DistortionSpec):
    sigma: float
    tag = "GaussianBlur"

    def __post_init__(self):
        sigma = _real(self.sigma, "sigma")
        if sigma <= 0:
            raise SpecError(f"sigma must be > 0, got {sigma}", field="sigma")
        object.__setattr__(self, "sigma", sigma)

    def label(self):
        return f"{self.sigma:.1f}"


@dataclass(frozen=True)
class Brightness(DistortionSpec):
    beta: float
    tag = "Brightness"

    def __post_init__(self):
        beta = _real(self.beta, "beta")
        if beta < 0:
            raise SpecError(f"beta must be >= 0, got {beta}", field="beta")
        object.__setattr__(self, "beta", beta)

    def label(self):
        return f"{self.beta:.1f}"


@dataclass(frozen=True)
class GaussianNoise(DistortionSpec):
    sigma: float
    tag = "GaussianNoise"

    def __post_init__(self):
        sigma = _real(self.sigma, "sigma")
        if sigma < 0:
            raise SpecError(f"sigma must be >= 0, got {sigma}", field="sigma")
        object.__setattr__(self, "sigma", sigma)

    def label(self):
        return f"{self.sigma:g}"


@dataclass(frozen=True)
class SaltPepper(DistortionSpec):
    p: float
    tag = "SaltPepper"

    def __post_init__(self):
        p = _real(self.p, "p")
        if not 0.0 <= p <= 1.0:
            raise SpecError(f"p must lie in [0, 1], got {p}", field="p")
        object.__setattr__(self, "p", p)

    def label(self):
        return f"{self.p:.2f}"


@dataclass(frozen=True)
class Resolution(DistortionSpec):
    w: int
    h: int
    tag = "Resolution"

    def __post_init__(self):
        _pixels(self.w, "w")
        _pixels(self.h, "h")

    def label(self):
        return f"{self.w}x{self.h}"


SPEC_TYPES = {
    cls.tag: cls
    for cls in (Identity, Occlusion, GaussianBlur, Brightness, GaussianNoise, SaltPepper, Resolution)
}


def parse_spec(obj):
    """Build a spec from ``{"Tag": {field: value}}`` (a dict or its JSON text).

    Raises:
        SpecError: naming the offending field where possible.
    """
    if isinstance(obj, DistortionSpec):
        return obj
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SpecError(f"spec is not valid JSON: {exc}") from exc
    if isinstance(obj, str):
        obj = {obj: {}}
    if not isinstance(obj, dict) or len(obj) != 1:
        raise SpecError('spec must be a single-key object like {"GaussianBlur": {"sigma": 2.0}}')
    (tag, params), = obj.items()
    cls = SPEC_TYPES.get(tag)
    if cls is None:
        raise SpecError(f"unknown distortion {tag!r}; expected one of {sorted(SPEC_TYPES)}", field=tag)
    if params is None:
        params = {}
    if not isinstance(params, dict):
        raise SpecError(f"{tag} parameters must be an object", field=tag)
    expected = {f.name for f in fields(cls)}
    for name in params:
        if name not in expected:
            raise SpecError(f"{tag} has no field {name!r}", field=name)
    for name in expected:
        if name not in params:
            raise SpecError(f"{tag} is missing field {name!r}", field=name)
    return cls(**params)


FAMILIES = {
    "occlusion": tuple(Occlusion(r) for r in FaceRegion),
    "blur": tuple(GaussianBlur(s) for s in BLUR_SIGMAS),
    "brightness": tuple(Brightness(b) for b in BRIGHTNESS_BETAS),
    "noise": tuple(GaussianNoise(s) for s in NOISE_SIGMAS),
    "saltpepper": tuple(SaltPepper(p) for p in SALT_PEPPER_PS),
    "resolution": tuple(Resolution(w, h) for w, h in RESOLUTIONS),
}

_FAMILY_BUILDERS = {
    "occlusion": lambda v: Occlusion(v),
    "blur": lambda v: GaussianBlur(v),
    "brightness": lambda v: Brightness(v),
    "noise": lambda v: GaussianNoise(v),
    "saltpepper": lambda v: SaltPepper(v),
    "resolution": lambda v: Resolution(*v) if isinstance(v, (list, tuple)) else Resolution(v, v),
}


def family_grid(family, values=None):
    """The default grid for ``family``, or one built from explicit ``values``."""
    if family not in FAMILIES:
        raise SpecError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}", field="family")
    if values is None:
        return FAMILIES[family]
    if not values:
        raise SpecError("intensity grid must not be empty", field="grid")
    return tuple(_FAMILY_BUILDERS[family](v) for v in values)

"""68-point facial landmarks and the rectangles used for occlusion.

Indices follow the usual 1-based 68-point annotation: jaw 1-17, eyebrows
18-27, nose 28-36, eyes 37-48, mouth 49-68.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KeypointError

N_POINTS = 68
EYE_MARGIN = 0.10
FOREHEAD_RATIO = 1.2


class FaceRegion(str, enum.Enum):
    EYES = "Eyes"
    NOSE = "Nose"
    MOUTH = "Mouth"
    FOREHEAD = "Forehead"
    LEFT_CHEEK = "LeftCheek"
    RIGHT_CHEEK = "RightCheek"
    MASK = "Mask"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        for member in cls:
            if member.value.lower() == str(value).lower():
                return member
        raise KeypointError(f"unknown face region {value!r}")


@dataclass(frozen=True)
class RectRegion:
    """Pixel rectangle, inclusive of (x0, y0), exclusive of (x1, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def area(self):
        return max(0, self.x1 - self.x0) * max(0, self.y1 - self.y0)

    def shifted(self, dx, dy):
        return RectRegion(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)


class KeypointSet:
    """Exactly 68 finite, non-negative (x, y) landmark coordinates."""

    __slots__ = ("_pts",)

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise KeypointError("keypoints must be (x, y) pairs")
        if pts.shape[0] != N_POINTS:
            raise KeypointError(f"expected {N_POINTS} points, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise KeypointError("keypoint coordinates must be finite")
        if np.any(pts < 0):
            raise KeypointError("keypoint coordinates must be >= 0")
        pts.flags.writeable = False
        self._pts = pts

    @property
    def points(self):
        return self._pts

    def point(self, k):
        """Return the 1-based point ``k`` as an (x, y) tuple."""
        x, y = self._pts[k - 1]
        return float(x), float(y)

    def span(self, first, last):
        """Array of 1-based points ``first..last`` inclusive."""
        return self._pts[first - 1:last]

    def translated(self, dx, dy):
        return KeypointSet(self._pts + np.array([dx, dy]))

    def __eq__(self, other):
        return isinstance(other, KeypointSet) and np.array_equal(self._pts, other._pts)

    def __repr__(self):
        return f"KeypointSet(n={N_POINTS})"


def load_keypoints(path):
    """Parse a keypoint file: 68 lines of ``x y`` or a JSON array of 68 pairs."""
    text = Path(path).read_text()
    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise KeypointError(f"invalid keypoint JSON: {exc}") from exc
        if not isinstance(data, list) or any(
            not isinstance(p, list) or len(p) != 2 for p in data
        ):
            raise KeypointError("keypoint JSON must be an array of [x, y] pairs")
        if len(data) != N_POINTS:
            raise KeypointError(f"expected {N_POINTS} points, got {len(data)}")
        try:
            return KeypointSet([[float(x), float(y)] for x, y in data])
        except (TypeError, ValueError) as exc:
            raise KeypointError(f"non-numeric keypoint value: {exc}") from exc
    points = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 2:
            raise KeypointError(f"line {lineno}: expected 'x y', got {line!r}")
        try:
            points.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise KeypointError(f"line {lineno}: non-numeric token in {line!r}") from None
    if len(points) != N_POINTS:
        raise KeypointError(f"expected {N_POINTS} points, got {len(points)}")
    return KeypointSet(points)


def save_keypoints(kps, path):
    lines = [f"{x!r} {y!r}" for x, y in kps.points.tolist()]
    Path(path).write_text("\n".join(lines) + "\n")


def round_half_up(v):
    return int(math.floor(v + 0.5))


def _bbox(pts, margin=0.0):
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    mx, my = margin * (x1 - x0), margin * (y1 - y0)
    return x0 - mx, y0 - my, x1 + mx, y1 + my


def region_bounds(kps, region):
    """Real-valued (x0, y0, x1, y1) of ``region`` before rounding and clamping."""
    region = FaceRegion.parse(region)
    if region is FaceRegion.EYES:
        return _bbox(kps.span(37, 48), EYE_MARGIN)
    if region is FaceRegion.NOSE:
        return _bbox(kps.span(28, 36), EYE_MARGIN)
    if region is FaceRegion.MOUTH:
        return _bbox(kps.span(49, 68), EYE_MARGIN)
    if region is FaceRegion.FOREHEAD:
        brows = kps.span(18, 27)
        brow_top = brows[:, 1].min()
        eye_top = kps.span(37, 48)[:, 1].min()
        # the forehead band sits above the brows; the image-top clamp happens later
        top = brow_top - FOREHEAD_RATIO * (eye_top - brow_top)
        return brows[:, 0].min(), top, brows[:, 0].max(), brow_top
    if region is FaceRegion.LEFT_CHEEK:
        xa, xb = kps.point(2)[0], kps.point(32)[0]
        eye_bottom = kps.span(37, 42)[:, 1].max()
        mouth_top = kps.span(49, 68)[:, 1].min()
        return min(xa, xb), eye_bottom, max(xa, xb), mouth_top
    if region is FaceRegion.RIGHT_CHEEK:
        xa, xb = kps.point(36)[0], kps.point(16)[0]
        eye_bottom = kps.span(43, 48)[:, 1].max()
        mouth_top = kps.span(49, 68)[:, 1].min()
        return min(xa, xb), eye_bottom, max(xa, xb), mouth_top
    jaw = kps.span(2, 16)
    return jaw[:, 0].min(), kps.point(31)[1], jaw[:, 0].max(), jaw[:, 1].max()


def region_rect_unclamped(kps, region):
    x0, y0, x1, y1 = region_bounds(kps, region)
    return RectRegion(*(round_half_up(v) for v in (x0, y0, x1, y1)))


def region_bbox(kps, region, img_w, img_h):
    """Integer rectangle for ``region`` clamped to a ``img_w`` x ``img_h`` image.

    Raises:
        KeypointError: if nothing of the region remains inside the image.
    """
    if img_w < 1 or img_h < 1:
        raise ValueError("image dimensions must be positive")
    r = region_rect_unclamped(kps, region)
    clamped = RectRegion(
        min(max(r.x0, 0), img_w),
        min(max(r.y0, 0), img_h),
        min(max(r.x1, 0), img_w),
        min(max(r.y1, 0), img_h),
    )
    if clamped.x1 <= clamped.x0 or clamped.y1 <= clamped.y0:
        raise KeypointError(
            f"{FaceRegion.parse(region).value} region is empty after clamping to "
            f"{img_w}x{img_h}; keypoints likely lie outside the image"
        )
    return clamped

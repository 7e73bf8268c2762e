import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distaudit.errors import KeypointError
from distaudit.landmarks import (
    FaceRegion,
    KeypointSet,
    load_keypoints,
    region_bbox,
    region_rect_unclamped,
)
from distaudit.synth import landmarks_for, subject_params


def canonical_face():
    """A 100x100 synthetic landmark layout from the dataset builder."""
    p = subject_params(0, "canon", "G1", "R1")
    return KeypointSet(landmarks_for(p, 50.0, 52.0))


def up(v):
    return math.floor(v + 0.5)


def test_load_text(tmp_path):
    path = tmp_path / "k.txt"
    path.write_text("".join(f"{i} {i}\n" for i in range(1, 69)))
    kps = load_keypoints(path)
    assert kps.point(1) == (1.0, 1.0)
    assert kps.point(68) == (68.0, 68.0)


def test_load_json_equals_text(tmp_path):
    pts = [[i * 0.5, 100 - i] for i in range(1, 69)]
    (tmp_path / "k.json").write_text(json.dumps(pts))
    (tmp_path / "k.txt").write_text("\n".join(f"{x} {y}" for x, y in pts))
    assert load_keypoints(tmp_path / "k.json") == load_keypoints(tmp_path / "k.txt")


def test_load_errors(tmp_path):
    path = tmp_path / "k.txt"
    path.write_text("".join(f"{i} {i}\n" for i in range(1, 68)))
    with pytest.raises(KeypointError, match="expected 68 points"):
        load_keypoints(path)
    path.write_text("1 x\n" * 68)
    with pytest.raises(KeypointError, match="non-numeric"):
        load_keypoints(path)


def test_eyes_bbox_oracle():
    # eyes occupy x in [30, 70], y in [40, 50]
    pts = np.full((68, 2), 50.0)
    pts[36:48] = [[30 + 40 * (i % 6) / 5, 40 + 10 * (i // 6) / 1] for i in range(12)]
    kps = KeypointSet(pts)
    xs, ys = pts[36:48, 0], pts[36:48, 1]
    w, h = xs.max() - xs.min(), ys.max() - ys.min()
    want = (up(xs.min() - 0.1 * w), up(ys.min() - 0.1 * h), up(xs.max() + 0.1 * w), up(ys.max() + 0.1 * h))
    r = region_bbox(kps, FaceRegion.EYES, 100, 100)
    assert (r.x0, r.y0, r.x1, r.y1) == want == (26, 39, 74, 51)


def test_eyes_bbox_clamped():
    pts = np.full((68, 2), 5.0)
    pts[36:48] = [[1 + i, 1 + i] for i in range(12)]
    r = region_bbox(KeypointSet(pts), "Eyes", 10, 10)
    assert (r.x0, r.y0, r.x1, r.y1) == (0, 0, 10, 10)


def test_mask_bbox_oracle():
    kps = canonical_face()
    pts = kps.points
    jaw = pts[1:16]
    r = region_bbox(kps, FaceRegion.MASK, 100, 100)
    assert r.y0 == up(pts[30, 1])
    assert r.y1 == min(up(jaw[:, 1].max()), 100)
    assert (r.x0, r.x1) == (up(jaw[:, 0].min()), up(jaw[:, 0].max()))


def test_forehead_and_cheeks_oracle():
    kps = canonical_face()
    pts = kps.points
    brows, eyes = pts[17:27], pts[36:48]
    brow_top, eye_top = brows[:, 1].min(), eyes[:, 1].min()
    r = region_bbox(kps, FaceRegion.FOREHEAD, 100, 100)
    assert (r.x0, r.x1, r.y1) == (up(brows[:, 0].min()), up(brows[:, 0].max()), up(brow_top))
    assert r.y0 == max(0, up(brow_top - 1.2 * (eye_top - brow_top)))

    left = region_bbox(kps, FaceRegion.LEFT_CHEEK, 100, 100)
    assert (left.x0, left.x1) == (up(pts[1, 0]), up(pts[31, 0]))
    assert (left.y0, left.y1) == (up(pts[36:42, 1].max()), up(pts[48:68, 1].min()))
    right = region_bbox(kps, FaceRegion.RIGHT_CHEEK, 100, 100)
    assert (right.x0, right.x1) == (up(pts[35, 0]), up(pts[15, 0]))


def test_regions_pairwise_distinct():
    kps = canonical_face()
    rects = [region_bbox(kps, r, 100, 100) for r in FaceRegion]
    assert len(set(rects)) == 7
    assert all(r.area > 0 for r in rects)


def test_empty_after_clamp():
    kps = KeypointSet(np.full((68, 2), 5000.0))
    with pytest.raises(KeypointError, match="empty"):
        region_bbox(kps, FaceRegion.NOSE, 100, 100)


def test_keypoint_invariants():
    with pytest.raises(KeypointError):
        KeypointSet(np.zeros((67, 2)))
    with pytest.raises(KeypointError):
        KeypointSet(np.full((68, 2), -1.0))
    with pytest.raises(KeypointError):
        KeypointSet(np.full((68, 2), np.nan))


@given(dx=st.integers(0, 200), dy=st.integers(0, 200), region=st.sampled_from(list(FaceRegion)))
def test_translation_equivariance(dx, dy, region):
    kps = canonical_face()
    base = region_rect_unclamped(kps, region)
    assert region_rect_unclamped(kps.translated(dx, dy), region) == base.shifted(dx, dy)

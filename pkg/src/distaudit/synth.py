"""Seeded synthetic face-like dataset with 68-point landmarks and subgroup tags.

Each subject gets fixed geometry, skin tone and a low-frequency texture; each
image of a subject adds small pose, illumination and sensor-noise variation.
Gender and race only shift the parameter distributions, so the toy extractor
sees mild, controllable subgroup differences.
"""
from __future__ import annotations

import math
import random
from pathlib import Path

import numpy as np

from .distort import standard_normals
from .imgcore import Image, save_image
from .landmarks import KeypointSet, save_keypoints
from .protocol import ManifestRecord, derive_seed, write_manifest

GENDERS = ("G1", "G2")
RACES = ("R1", "R2")
SKIN = {"R1": (222.0, 192.0, 168.0), "R2": (118.0, 84.0, 62.0)}


def _ellipse_points(cx, cy, rx, ry, n, start=0.0, stop=2 * math.pi, endpoint=False):
    span = stop - start
    steps = n - 1 if endpoint else n
    return [
        (cx + rx * math.cos(start + span * i / steps), cy + ry * math.sin(start + span * i / steps))
        for i in range(n)
    ]


def subject_params(seed, subject_id, gender, race):
    rng = random.Random(derive_seed(seed, "subject", subject_id))
    u = rng.random
    shrink = 2.0 if gender == "G2" else 0.0
    tone = SKIN[race]
    jitter = 14.0 * (u() - 0.5)
    return {
        "a": 29.0 + 5.0 * u() - shrink,
        "b": 37.0 + 5.0 * u() - shrink,
        "skin": tuple(max(0.0, min(255.0, c + jitter)) for c in tone),
        "eye_dx": 11.0 + 4.0 * u(),
        "eye_dy": -8.0 - 4.0 * u(),
        "eye_rx": 4.0 + 2.0 * u(),
        "eye_ry": 2.0 + 1.2 * u(),
        "brow_gap": 4.0 + 3.0 * u(),
        "brow_w": 1.0 + 1.2 * u(),
        "nose_len": 11.0 + 5.0 * u(),
        "nose_w": 4.0 + 3.0 * u(),
        "mouth_y": 15.0 + 5.0 * u(),
        "mouth_rx": 7.0 + 5.0 * u(),
        "mouth_ry": 2.0 + 2.0 * u(),
        "hair": 20.0 + 60.0 * u(),
        "hair_len": (22.0 if gender == "G2" else 6.0) + 8.0 * u(),
        "tex": [(u() * 0.25 + 0.05, u() * 0.25 + 0.05, u() * 2 * math.pi, 6.0 + 10.0 * u()) for _ in range(3)],
    }


def landmarks_for(p, cx, cy, mouth_scale=1.0):
    """The 68 keypoints implied by subject geometry ``p`` at face center (cx, cy)."""
    a, b = p["a"], p["b"]
    pts = _ellipse_points(cx, cy - 0.15 * b, a, b * 1.05, 17, math.pi, 0.0, endpoint=True)
    eye_y = cy + p["eye_dy"]
    lx, rx = cx - p["eye_dx"], cx + p["eye_dx"]
    brow_y = eye_y - p["eye_ry"] - p["brow_gap"]
    for ex in (lx, rx):
        pts += [(ex - p["eye_rx"] * 1.2 + 2.4 * p["eye_rx"] * i / 4, brow_y - 1.5 * math.sin(math.pi * i / 4)) for i in range(5)]
    nose_top, nose_tip = eye_y - 1.0, eye_y + p["nose_len"]
    pts += [(cx, nose_top + (nose_tip - nose_top) * i / 3) for i in range(4)]
    pts += [(cx - p["nose_w"] + 2 * p["nose_w"] * i / 4, nose_tip + 1.5 - abs(i - 2) * 0.6) for i in range(5)]
    for ex in (lx, rx):
        pts += _ellipse_points(ex, eye_y, p["eye_rx"], p["eye_ry"], 6, math.pi, 3 * math.pi)
    my = cy + p["mouth_y"]
    mrx = p["mouth_rx"] * mouth_scale
    pts += _ellipse_points(cx, my, mrx, p["mouth_ry"], 12, math.pi, 3 * math.pi)
    pts += _ellipse_points(cx, my, mrx * 0.7, p["mouth_ry"] * 0.4, 8, math.pi, 3 * math.pi)
    return pts


def render_face(p, size, cx, cy, light, noise_seed, mouth_scale=1.0):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) + 0.5
    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = 150.0 + 40.0 * (yy / size)[:, :, None]

    a, b = p["a"], p["b"]
    fy = cy - 0.15 * b
    face = ((xx - cx) / a) ** 2 + ((yy - fy) / (b * 1.05)) ** 2 <= 1.0
    hair = (((xx - cx) / (a + 5)) ** 2 + ((yy - fy + 4) / (b + 6)) ** 2 <= 1.0) & ~face
    hair &= yy < fy + p["hair_len"]
    img[hair] = p["hair"]
    skin = np.array(p["skin"])
    tex = np.zeros((size, size))
    for fx, fyq, ph, amp in p["tex"]:
        tex += amp * np.cos(fx * (xx - cx) + fyq * (yy - cy) + ph)
    img[face] = skin + tex[face][:, None]

    eye_y = cy + p["eye_dy"]
    brow_y = eye_y - p["eye_ry"] - p["brow_gap"]
    for ex in (cx - p["eye_dx"], cx + p["eye_dx"]):
        brow = (np.abs(yy - brow_y) <= p["brow_w"]) & (np.abs(xx - ex) <= p["eye_rx"] * 1.2)
        img[brow & face] = (45.0, 35.0, 30.0)
        eye = ((xx - ex) / p["eye_rx"]) ** 2 + ((yy - eye_y) / p["eye_ry"]) ** 2 <= 1.0
        img[eye] = (240.0, 240.0, 235.0)
        iris = (xx - ex) ** 2 + (yy - eye_y) ** 2 <= (0.8 * p["eye_ry"]) ** 2
        img[iris] = (40.0, 30.0, 25.0)

    nose_tip = eye_y + p["nose_len"]
    t = np.clip((yy - eye_y) / max(p["nose_len"], 1.0), 0.0, 1.0)
    nose = (yy >= eye_y) & (yy <= nose_tip + 1.5) & (np.abs(xx - cx) <= 1.0 + t * p["nose_w"])
    img[nose] *= 0.82

    my = cy + p["mouth_y"]
    mouth = ((xx - cx) / (p["mouth_rx"] * mouth_scale)) ** 2 + ((yy - my) / p["mouth_ry"]) ** 2 <= 1.0
    img[mouth] = (150.0, 55.0, 60.0)

    img *= light
    img += standard_normals(noise_seed, img.size).reshape(img.shape) * 3.0
    return Image(np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8))


def build_synthetic(out_dir, seed=0, subjects_per_cell=25, images_per_subject=12, size=96):
    """Write images, keypoints and ``manifest.csv`` under ``out_dir``; return the manifest path.

    Subjects are split evenly over the four gender x race cells.
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "keypoints").mkdir(exist_ok=True)
    records = []
    for gender in GENDERS:
        for race in RACES:
            for s in range(subjects_per_cell):
                sid = f"{gender}{race}S{s:03d}"
                p = subject_params(seed, sid, gender, race)
                for k in range(images_per_subject):
                    image_id = f"{sid}_{k:02d}"
                    rng = random.Random(derive_seed(seed, "image", image_id))
                    cx = size / 2 + 3.0 * (rng.random() - 0.5)
                    cy = size / 2 + 2.0 + 3.0 * (rng.random() - 0.5)
                    light = 0.92 + 0.16 * rng.random()
                    mouth_scale = 0.9 + 0.2 * rng.random()
                    img = render_face(p, size, cx, cy, light, derive_seed(seed, "noise", image_id), mouth_scale)
                    kps = KeypointSet(np.clip(landmarks_for(p, cx, cy, mouth_scale), 0.0, size - 1.0))
                    img_path = out / "images" / f"{image_id}.ppm"
                    kp_path = out / "keypoints" / f"{image_id}.txt"
                    save_image(img, img_path)
                    save_keypoints(kps, kp_path)
                    records.append(ManifestRecord(image_id, str(img_path), sid, gender, race, str(kp_path)))
    manifest = out / "manifest.csv"
    write_manifest(records, manifest)
    return manifest

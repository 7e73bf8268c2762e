"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with its measurements and
runtime, then asserts. Run with ``pytest tests/test_acceptance.py -v -s``.
"""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from distaudit.audit import REPORT_FILES, AuditConfig, run_audit, run_similarity_study, write_report
from distaudit.distort import (
    SeedContext,
    add_gaussian_noise,
    add_salt_pepper,
    adjust_brightness,
    apply,
    gaussian_blur,
    gaussian_kernel,
    kernel_size,
)
from distaudit.imgcore import Image, resize_area, resize_bilinear
from distaudit.metrics import degree_of_bias, empirical_far, far_threshold
from distaudit.protocol import generate_pairs, load_manifest, validate_protocol
from distaudit.specs import GaussianNoise, Identity, SaltPepper

DOB_ROWS = Path(__file__).parent / "data" / "dob_table_rows.json"


class Criterion:
    """Times a block and prints one PASS/FAIL line for it."""

    def __init__(self, name, budget_s, capsys):
        self.name, self.budget, self.capsys = name, budget_s, capsys
        self.details = []
        self.ok = True

    def check(self, cond, detail):
        self.details.append(("" if cond else "!") + detail)
        self.ok = self.ok and bool(cond)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.check(False, f"error: {exc_type.__name__}: {exc}")
        self.check(elapsed < self.budget, f"runtime {elapsed:.2f}s < {self.budget}s")
        with self.capsys.disabled():
            print(f"\n{'PASS' if self.ok else 'FAIL'} {self.name}: " + "; ".join(self.details))
        if exc_type is None:
            assert self.ok, self.details
        return False


def test_criterion_1_dob_reproduction(capsys):
    with Criterion("1 DoB reproduction (+/-0.01)", 1.0, capsys) as c:
        rows = json.loads(DOB_ROWS.read_text())
        worst = 0.0
        bad = []
        for r in rows:
            got = degree_of_bias(list(r["accuracies"].values()))
            err = abs(got - r["dob"])
            worst = max(worst, err)
            if err > 0.01 + 1e-9:
                bad.append((r["family"], r["setting"], r["model"], got, r["dob"]))
        required = [r for r in rows if r["family"] != "resolution"]
        c.check(len(required) == 128, f"{len(required)} rows from the required tables")
        c.check(not bad, f"{len(rows) - len(bad)}/{len(rows)} rows within 0.01 (max err {worst:.4f})")
        for fam, setting, model, got, dob in bad:
            c.check(False, f"{fam} {setting} {model}: computed {got:.4f}, printed {dob}")
        for accs, dob in (((98.13, 92.00), 4.33), ((94.23, 79.83), 10.18), ((97.90, 91.97), 4.19)):
            c.check(abs(degree_of_bias(accs) - dob) <= 0.01, f"{accs} -> {degree_of_bias(accs):.4f}")


def test_criterion_2_kernel_sizes(capsys):
    with Criterion("2 blur kernel sizes", 1.0, capsys) as c:
        got = {s: kernel_size(s) for s in (2.0, 2.2, 3.0, 3.4, 4.0)}
        c.check(list(got.values()) == [9, 11, 13, 15, 17], f"sizes {got}")
        c.check(all(len(gaussian_kernel(s)) == k for s, k in got.items()), "kernel lengths match")


def test_criterion_3_protocol_counts(synthetic_manifest, capsys):
    records = load_manifest(synthetic_manifest)
    with Criterion("3 protocol counts", 10.0, capsys) as c:
        proto = generate_pairs(records, "gender", seed=0)
        pairs = list(proto.pairs())
        n_gen = sum(p.genuine for p in pairs)
        c.check(len(proto.splits) == 10, f"{len(proto.splits)} splits")
        c.check(len(pairs) == 12000, f"{len(pairs)} pairs")
        c.check((n_gen, len(pairs) - n_gen) == (6000, 6000), f"{n_gen} genuine / {len(pairs) - n_gen} impostor")
        c.check(proto.counts() == {"G1": (3000, 3000), "G2": (3000, 3000)}, f"per subgroup {proto.counts()}")
        report = validate_protocol(proto, records)
        c.check(report.ok, f"{len(report.violations)} violations")


def test_criterion_4_far_operating_point(capsys):
    with Criterion("4 FAR operating point", 5.0, capsys) as c:
        rng = np.random.default_rng(2024)
        impostor = rng.normal(0.2, 0.15, 10_000).round(3).tolist()  # rounding forces ties
        t = far_threshold(impostor, 0.01)
        far = empirical_far(impostor, t)
        c.check(far <= 0.01, f"FAR {far:.4f} at t={t:.6f}")
        # brute force: the lowest candidate threshold that keeps FAR <= 0.01
        candidates = sorted(set(impostor)) + [math.inf]
        best = next(x for x in candidates if sum(s >= x for s in impostor) / len(impostor) <= 0.01)
        c.check(
            sum(s >= t for s in impostor) == sum(s >= best for s in impostor),
            f"accept count {sum(s >= t for s in impostor)} equals brute-force maximum",
        )
        below = max(s for s in impostor if s < t)
        c.check(empirical_far(impostor, below) > 0.01, "any lower score-threshold exceeds 0.01")


def test_criterion_5_operator_invariants(capsys):
    rng = np.random.default_rng(7)
    with Criterion("5 operator invariants", 30.0, capsys) as c:
        img = Image(rng.integers(0, 256, (40, 52, 3), dtype=np.uint8))
        ctx = SeedContext(11, "item")
        same = [
            adjust_brightness(img, 1.0),
            add_gaussian_noise(img, 0.0, ctx),
            add_salt_pepper(img, 0.0, ctx),
            apply(img, Identity(), ctx),
            resize_area(img, 52, 40),
            resize_bilinear(img, 52, 40),
        ]
        c.check(all(s.data.tobytes() == img.data.tobytes() for s in same), "6 identity cases byte-identical")

        const = Image(np.full((30, 30, 1), 137, np.uint8))
        c.check(all(np.all(gaussian_blur(const, s).data == 137) for s in (2.0, 3.0, 4.0)), "constant blur fixed")

        worst = 0
        for _ in range(20):
            a = rng.integers(0, 256, (16, 16, 1), dtype=np.uint8)
            for sigma in (2.0, 4.0):
                k = np.asarray(gaussian_kernel(sigma))
                r = len(k) // 2
                pad = np.pad(a[:, :, 0].astype(np.float64), r, mode="reflect")
                dense = np.zeros((16, 16))
                k2 = np.outer(k, k)
                for y in range(16):
                    for x in range(16):
                        dense[y, x] = np.sum(pad[y : y + 2 * r + 1, x : x + 2 * r + 1] * k2)
                ref = np.clip(np.floor(dense + 0.5), 0, 255)
                got = gaussian_blur(Image(a), sigma).data[:, :, 0].astype(np.float64)
                worst = max(worst, int(np.max(np.abs(got - ref))))
        c.check(worst <= 1, f"separable vs dense max diff {worst}")

        gray = Image(np.full((512, 512, 1), 128, np.uint8))
        n = 512 * 512
        for p in (0.03, 0.09, 0.15):
            out = add_salt_pepper(gray, p, SeedContext(5, f"sp{p}"))
            frac = float(np.mean(out.data != 128))
            bound = 4 * math.sqrt(p * (1 - p) / n)
            c.check(abs(frac - p) <= bound, f"p={p}: altered {frac:.5f} (bound {bound:.5f})")

        out = add_gaussian_noise(gray, 20.0, SeedContext(5, "noise"))
        std = float(np.std(out.data.astype(np.float64)))
        c.check(abs(std - 20.0) <= 1.0, f"noise std {std:.3f} vs 20")


def test_criterion_6_determinism(synthetic_manifest, tmp_path, capsys):
    with Criterion("6 determinism across runs and thread counts", 120.0, capsys) as c:
        outs = []
        for threads in (1, 8):
            out = tmp_path / f"t{threads}"
            cfg = AuditConfig(manifest=str(synthetic_manifest), family="blur", seed=42, threads=threads)
            write_report(run_audit(cfg), out)
            outs.append(out)
        for name in REPORT_FILES:
            a, b = (o / name for o in outs)
            c.check(a.read_bytes() == b.read_bytes(), f"{name} identical")


def test_criterion_7_end_to_end(synthetic_manifest, capsys):
    with Criterion("7 end-to-end sanity (toy extractor)", 120.0, capsys) as c:
        cfg = AuditConfig(manifest=str(synthetic_manifest), family="blur", grid=[{"Identity": {}}, {"GaussianBlur": {"sigma": 4.0}}])
        rows = run_audit(cfg).rows
        base, ident = rows[0], rows[1]
        c.check(
            [s.accuracy for s in ident.subgroups] == [s.accuracy for s in base.subgroups],
            "Identity row accuracy == baseline " + ", ".join(f"{s.label} {s.accuracy:.2f}" for s in base.subgroups),
        )
        pts = run_similarity_study(AuditConfig(manifest=str(synthetic_manifest), family="blur", grid=[4.0]))
        by = {}
        for p in pts:
            by.setdefault(p.subgroup, {})[p.intensity] = p.mean
        for sg, m in sorted(by.items()):
            c.check(abs(m["none"] - 1.0) <= 1e-6, f"{sg} identity similarity {m['none']:.8f}")
            c.check(m["4.0"] < m["none"], f"{sg} blur 4.0 similarity {m['4.0']:.4f} < identity")

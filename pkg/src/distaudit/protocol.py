"""Manifests, demographic balancing and LFW-style verification pairs.

The pair generator produces ten splits; every split holds, for every subgroup
of the axis, a fixed number of genuine and impostor pairs drawn within that
subgroup. Splits are made subject-disjoint when each fold of subjects can
supply its quota, and are pair-disjoint otherwise.
"""
from __future__ import annotations

import csv
import hashlib
import random
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InsufficientDataError, ManifestError

MANIFEST_COLUMNS = ("image_id", "path", "subject_id", "gender", "race", "keypoints_path")
PAIR_COLUMNS = ("split", "label", "probe_id", "gallery_id", "subgroup")
AXES = ("gender", "race", "intersection")

N_SPLITS = 10
PER_SPLIT = 300
# above this many candidate impostor pairs, sample by rejection instead of enumerating
_ENUMERATE_LIMIT = 200_000


@dataclass(frozen=True)
class ManifestRecord:
    image_id: str
    path: str
    subject_id: str
    gender: str
    race: str
    keypoints_path: str | None = None


def load_manifest(path):
    """Parse a manifest CSV; relative image and keypoint paths resolve against its directory.

    Raises:
        ManifestError: for a missing column, an empty file, or a duplicate image_id.
    """
    path = Path(path)
    base = path.parent
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ManifestError(f"{path}: empty manifest")
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        # keypoints_path may be omitted entirely
        missing = [c for c in missing if c != "keypoints_path"]
        if missing:
            raise ManifestError(f"{path}: missing column(s) {', '.join(missing)}")
        records = []
        seen = set()
        for lineno, row in enumerate(reader, 2):
            image_id = (row["image_id"] or "").strip()
            if not image_id:
                raise ManifestError(f"{path}:{lineno}: empty image_id")
            if image_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate image_id {image_id!r}")
            seen.add(image_id)
            for col in ("path", "subject_id", "gender", "race"):
                if not (row[col] or "").strip():
                    raise ManifestError(f"{path}:{lineno}: empty {col} for {image_id!r}")
            kp = (row.get("keypoints_path") or "").strip() or None
            records.append(
                ManifestRecord(
                    image_id=image_id,
                    path=str(base / row["path"].strip()),
                    subject_id=row["subject_id"].strip(),
                    gender=row["gender"].strip(),
                    race=row["race"].strip(),
                    keypoints_path=str(base / kp) if kp else None,
                )
            )
    if not records:
        raise ManifestError(f"{path}: manifest has no records")
    return records


def write_manifest(records, path, relative_to=None):
    path = Path(path)
    root = Path(relative_to) if relative_to else path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            kp = _rel(r.keypoints_path, root) if r.keypoints_path else ""
            writer.writerow([r.image_id, _rel(r.path, root), r.subject_id, r.gender, r.race, kp])


def _rel(p, root):
    try:
        return str(Path(p).relative_to(root))
    except ValueError:
        return str(p)


# -- axes and seeding -------------------------------------------------------------


def subgroup_label(record, axis_name):
    if axis_name == "gender":
        return record.gender
    if axis_name == "race":
        return record.race
    if axis_name == "intersection":
        return f"{record.gender}-{record.race}"
    raise ManifestError(f"unknown demographic axis {axis_name!r}; expected one of {AXES}")


@dataclass(frozen=True)
class DemographicAxis:
    name: str
    subgroups: tuple

    def __post_init__(self):
        if len(self.subgroups) < 2:
            raise ManifestError(f"axis {self.name!r} needs at least 2 subgroups, got {list(self.subgroups)}")

    @classmethod
    def from_records(cls, name, records):
        return cls(name, tuple(sorted({subgroup_label(r, name) for r in records})))

    def label(self, record):
        return subgroup_label(record, self.name)


def control_axis_for(axis_name):
    """The attribute held balanced while analysing ``axis_name`` (None for intersections)."""
    return {"gender": "race", "race": "gender"}.get(axis_name)


def derive_seed(seed, *parts):
    h = hashlib.blake2b(digest_size=8, person=b"distaudit.prot")
    h.update(struct.pack("<Q", int(seed) & (2 ** 64 - 1)))
    for part in parts:
        raw = str(part).encode("utf-8")
        h.update(struct.pack("<I", len(raw)))
        h.update(raw)
    return int.from_bytes(h.digest(), "little")


def _rng(seed, *parts):
    return random.Random(derive_seed(seed, *parts))


# Only Random.random() is relied on: its output sequence is stable across Python
# versions, unlike shuffle/sample.
def _shuffle(items, rng):
    items = list(items)
    for i in range(len(items) - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        items[i], items[j] = items[j], items[i]
    return items


def _sample(items, k, rng):
    """``k`` distinct elements of ``items`` in draw order (partial Fisher-Yates)."""
    items = list(items)
    n = len(items)
    for i in range(k):
        j = i + int(rng.random() * (n - i))
        items[i], items[j] = items[j], items[i]
    return items[:k]


# -- balancing ----------------------------------------------------------------------


def balance_manifest(records, analysis_axis, control_axis, seed):
    """Equalise control-axis counts inside every analysis-axis subgroup.

    Every (analysis, control) cell is cut down to the smallest cell size, keeping
    a seeded random subset. Output is sorted by image_id.

    Raises:
        ManifestError: if some (analysis, control) combination has no records.
    """
    if control_axis is None:
        return sorted(records, key=lambda r: r.image_id)
    cells = defaultdict(list)
    for r in records:
        cells[(subgroup_label(r, analysis_axis), subgroup_label(r, control_axis))].append(r)
    a_labels = sorted({a for a, _ in cells})
    c_labels = sorted({c for _, c in cells})
    empty = [(a, c) for a in a_labels for c in c_labels if not cells.get((a, c))]
    if empty:
        raise ManifestError(
            "cannot balance: no records for "
            + ", ".join(f"{analysis_axis}={a}/{control_axis}={c}" for a, c in empty)
        )
    quota = min(len(v) for v in cells.values())
    kept = []
    for a in a_labels:
        for c in c_labels:
            cell = sorted(cells[(a, c)], key=lambda r: r.image_id)
            kept.extend(_sample(cell, quota, _rng(seed, "balance", a, c)))
    return sorted(kept, key=lambda r: r.image_id)


# -- pairs ----------------------------------------------------------------------------


@dataclass(frozen=True)
class Pair:
    probe_id: str
    gallery_id: str
    label: str  # "genuine" | "impostor"
    subgroup: str
    split: int

    @property
    def genuine(self):
        return self.label == "genuine"

    def identity(self):
        """Unordered image pair plus label; used for uniqueness checks."""
        return (frozenset((self.probe_id, self.gallery_id)), self.label)


@dataclass
class PairProtocol:
    axis: DemographicAxis
    splits: list = field(default_factory=list)
    per_split: int = PER_SPLIT
    subject_disjoint: bool = False

    def pairs(self):
        for split in self.splits:
            yield from split

    def __len__(self):
        return sum(len(s) for s in self.splits)

    def counts(self):
        out = defaultdict(lambda: [0, 0])
        for p in self.pairs():
            out[p.subgroup][0 if p.genuine else 1] += 1
        return {k: tuple(v) for k, v in out.items()}


def _genuine_candidates(subjects):
    out = []
    for sid in sorted(subjects):
        imgs = subjects[sid]
        for i in range(len(imgs)):
            for j in range(i + 1, len(imgs)):
                out.append((imgs[i], imgs[j]))
    return out


def _genuine_capacity(subjects):
    return sum(len(v) * (len(v) - 1) // 2 for v in subjects.values())


def _impostor_capacity(subjects):
    n = sum(len(v) for v in subjects.values())
    return n * (n - 1) // 2 - _genuine_capacity(subjects)


def _sample_genuine(subjects, need, rng):
    return _sample(_genuine_candidates(subjects), need, rng)


def _sample_impostors(subjects, need, rng):
    if _impostor_capacity(subjects) <= _ENUMERATE_LIMIT:
        flat = [(img, sid) for sid in sorted(subjects) for img in subjects[sid]]
        cands = [
            (flat[i][0], flat[j][0])
            for i in range(len(flat))
            for j in range(i + 1, len(flat))
            if flat[i][1] != flat[j][1]
        ]
        return _sample(cands, need, rng)
    flat = [(img, sid) for sid in sorted(subjects) for img in subjects[sid]]
    n = len(flat)
    seen = set()
    out = []
    while len(out) < need:
        i, j = int(rng.random() * n), int(rng.random() * n)
        if flat[i][1] == flat[j][1]:
            continue
        a, b = sorted((flat[i][0], flat[j][0]))
        if (a, b) in seen:
            continue
        seen.add((a, b))
        out.append((a, b))
    return out


def _orient(pairs, rng):
    """Randomly choose which image of each pair is the probe."""
    return [(b, a) if rng.random() < 0.5 else (a, b) for a, b in pairs]


def _subject_folds(subjects, n_splits, rng):
    """Greedy assignment of shuffled subjects to folds, evening out genuine capacity."""
    folds = [dict() for _ in range(n_splits)]
    caps = [0] * n_splits
    for sid in _shuffle(sorted(subjects), rng):
        k = min(range(n_splits), key=lambda f: (caps[f], len(folds[f]), f))
        folds[k][sid] = subjects[sid]
        caps[k] += len(subjects[sid]) * (len(subjects[sid]) - 1) // 2
    return folds


def generate_pairs(records, axis_name, seed, n_splits=N_SPLITS, per_split=PER_SPLIT):
    """Seeded genuine/impostor pairs for every subgroup on ``axis_name``.

    Raises:
        InsufficientDataError: naming the limiting subgroup and the counts involved.
    """
    axis = DemographicAxis.from_records(axis_name, records)
    by_group = defaultdict(lambda: defaultdict(list))
    for r in sorted(records, key=lambda r: r.image_id):
        by_group[axis.label(r)][r.subject_id].append(r.image_id)

    need = n_splits * per_split
    for sg in axis.subgroups:
        subjects = by_group[sg]
        have = _genuine_capacity(subjects)
        if have < need:
            raise InsufficientDataError(
                f"subgroup {sg}: need {need} distinct genuine pairs, only {have} possible "
                f"({len(subjects)} subjects)"
            )
        have = _impostor_capacity(subjects)
        if have < need:
            raise InsufficientDataError(
                f"subgroup {sg}: need {need} distinct impostor pairs, only {have} possible "
                f"({len(subjects)} subjects)"
            )

    # subject-disjoint only if every subgroup's every fold can meet its quota
    fold_plan = {}
    for sg in axis.subgroups:
        folds = _subject_folds(by_group[sg], n_splits, _rng(seed, "folds", axis_name, sg))
        if all(
            _genuine_capacity(f) >= per_split and _impostor_capacity(f) >= per_split for f in folds
        ):
            fold_plan[sg] = folds
    subject_disjoint = len(fold_plan) == len(axis.subgroups)

    splits = [[] for _ in range(n_splits)]
    for sg in axis.subgroups:
        subjects = by_group[sg]
        rng = _rng(seed, "pairs", axis_name, sg)
        if subject_disjoint:
            for s, fold in enumerate(fold_plan[sg]):
                gen = _orient(_sample_genuine(fold, per_split, rng), rng)
                imp = _orient(_sample_impostors(fold, per_split, rng), rng)
                splits[s].extend(Pair(p, g, "genuine", sg, s + 1) for p, g in gen)
                splits[s].extend(Pair(p, g, "impostor", sg, s + 1) for p, g in imp)
        else:
            gen = _orient(_sample_genuine(subjects, need, rng), rng)
            imp = _orient(_sample_impostors(subjects, need, rng), rng)
            for s in range(n_splits):
                lo, hi = s * per_split, (s + 1) * per_split
                splits[s].extend(Pair(p, g, "genuine", sg, s + 1) for p, g in gen[lo:hi])
                splits[s].extend(Pair(p, g, "impostor", sg, s + 1) for p, g in imp[lo:hi])
    return PairProtocol(axis=axis, splits=splits, per_split=per_split, subject_disjoint=subject_disjoint)


# -- validation ----------------------------------------------------------------------


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __str__(self):
        if self.ok:
            return "protocol valid: 0 violations"
        return f"{len(self.violations)} violation(s):\n" + "\n".join(f"  - {v}" for v in self.violations)


def validate_protocol(protocol, records=None, n_splits=N_SPLITS, per_split=None):
    """Check split structure, per-subgroup quotas, pair uniqueness and labels.

    With ``records`` the subject and subgroup consistency of every pair is
    checked as well.
    """
    per_split = protocol.per_split if per_split is None else per_split
    report = ValidationReport()
    v = report.violations
    if len(protocol.splits) != n_splits:
        v.append(f"expected {n_splits} splits, found {len(protocol.splits)}")

    first_seen = {}
    for s_idx, split in enumerate(protocol.splits, 1):
        counts = defaultdict(lambda: [0, 0])
        for p in split:
            if p.split != s_idx:
                v.append(f"pair {p.probe_id}/{p.gallery_id} tagged split {p.split} but stored in split {s_idx}")
            if p.label not in ("genuine", "impostor"):
                v.append(f"pair {p.probe_id}/{p.gallery_id} has unknown label {p.label!r}")
                continue
            if p.probe_id == p.gallery_id:
                v.append(f"pair {p.probe_id}/{p.gallery_id} matches an image with itself")
            counts[p.subgroup][0 if p.genuine else 1] += 1
            ident = p.identity()
            if ident in first_seen:
                where = first_seen[ident]
                kind = "disjointness" if where != s_idx else "duplicate"
                v.append(
                    f"{kind} violation: {p.label} pair {sorted(ident[0])} in split {where} and split {s_idx}"
                )
            else:
                first_seen[ident] = s_idx
        for sg in protocol.axis.subgroups:
            g, i = counts.get(sg, (0, 0))
            if (g, i) != (per_split, per_split):
                v.append(f"split {s_idx} subgroup {sg}: {g} genuine / {i} impostor, expected {per_split} / {per_split}")
        for sg in counts:
            if sg not in protocol.axis.subgroups:
                v.append(f"split {s_idx}: pair subgroup {sg!r} not on axis {protocol.axis.name}")

    if records is not None:
        index = {r.image_id: r for r in records}
        check_groups = protocol.axis.name in AXES
        for p in protocol.pairs():
            a, b = index.get(p.probe_id), index.get(p.gallery_id)
            if a is None or b is None:
                v.append(f"pair {p.probe_id}/{p.gallery_id} references an image missing from the manifest")
                continue
            if p.genuine and a.subject_id != b.subject_id:
                v.append(f"label violation: genuine pair {p.probe_id}/{p.gallery_id} spans subjects {a.subject_id}/{b.subject_id}")
            if not p.genuine and a.subject_id == b.subject_id:
                v.append(f"label violation: impostor pair {p.probe_id}/{p.gallery_id} shares subject {a.subject_id}")
            if check_groups:
                ga, gb = subgroup_label(a, protocol.axis.name), subgroup_label(b, protocol.axis.name)
                if ga != p.subgroup or gb != p.subgroup:
                    v.append(f"subgroup violation: pair {p.probe_id}/{p.gallery_id} labelled {p.subgroup}, images in {ga}/{gb}")
    return report


# -- pairs file ----------------------------------------------------------------------


def write_pairs(protocol, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PAIR_COLUMNS)
        for p in protocol.pairs():
            writer.writerow([p.split, 1 if p.genuine else 0, p.probe_id, p.gallery_id, p.subgroup])


def read_pairs(path, axis_name="custom", per_split=PER_SPLIT):
    """Load a pairs CSV back into a PairProtocol (splits ordered by number)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or any(c not in reader.fieldnames for c in PAIR_COLUMNS):
            raise ManifestError(f"{path}: header must be {','.join(PAIR_COLUMNS)}")
        by_split = defaultdict(list)
        for lineno, row in enumerate(reader, 2):
            try:
                split = int(row["split"])
                label = {"1": "genuine", "0": "impostor"}[row["label"].strip()]
            except (ValueError, KeyError):
                raise ManifestError(f"{path}:{lineno}: bad split or label") from None
            by_split[split].append(Pair(row["probe_id"], row["gallery_id"], label, row["subgroup"], split))
    if not by_split:
        raise ManifestError(f"{path}: no pairs")
    subgroups = tuple(sorted({p.subgroup for ps in by_split.values() for p in ps}))
    if len(subgroups) < 2:
        raise ManifestError(f"{path}: pairs cover fewer than 2 subgroups")
    axis = DemographicAxis(axis_name, subgroups)
    n = max(by_split)
    splits = [by_split.get(i, []) for i in range(1, n + 1)]
    return PairProtocol(axis=axis, splits=splits, per_split=per_split)

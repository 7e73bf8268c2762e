"""End-to-end bias audit: distort probes, embed, score, threshold, report.

One pair protocol per (axis, seed) is reused for every intensity, and the
undistorted baseline row is always evaluated first. Galleries stay clean.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .distort import RNG_NAME, SeedContext, apply
from .embed import StoreProvider, ToyProvider, cosine_similarity, store_key, store_read
from .errors import DistAuditError, SpecError, StoreError
from .imgcore import load_image
from .landmarks import load_keypoints
from .metrics import ScoreSet, similarity_curve, summarize
from .protocol import (
    AXES,
    balance_manifest,
    control_axis_for,
    generate_pairs,
    load_manifest,
    subgroup_label,
)
from .specs import Identity, family_grid, parse_spec

log = logging.getLogger(__name__)

REPORT_FILES = ("report.json", "report.csv", "scores.csv", "provenance.json")
# execution-only settings: excluded from the config echo so reports do not depend on them
_EXECUTION_KEYS = ("out_dir", "threads")


@dataclass
class AuditConfig:
    manifest: str
    axis: str = "gender"
    family: str = "blur"
    grid: list | None = None
    provider: str = "toy"
    seed: int = 0
    far: float = 0.01
    threshold_scope: str = "pooled"
    restore_resolution: bool = True
    balance: bool = True
    out_dir: str = "audit_out"
    threads: int = 1

    def __post_init__(self):
        if self.axis not in AXES:
            raise SpecError(f"axis must be one of {AXES}, got {self.axis!r}", field="axis")
        if not 0.0 < float(self.far) < 1.0:
            raise SpecError(f"far must lie in (0, 1), got {self.far}", field="far")
        if self.threshold_scope not in ("pooled", "subgroup"):
            raise SpecError("threshold_scope must be 'pooled' or 'subgroup'", field="threshold_scope")
        if int(self.threads) < 1:
            raise SpecError("threads must be >= 1", field="threads")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise SpecError("seed must be an unsigned 64-bit integer", field="seed")
        self.specs()  # validates family and grid

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SpecError(f"unknown config key(s): {', '.join(unknown)}", field=unknown[0])
        if "manifest" not in data:
            raise SpecError("config needs a 'manifest' path", field="manifest")
        return cls(**data)

    def specs(self):
        """Grid specs in order; a grid entry may also be a full spec object."""
        if self.grid and all(isinstance(v, dict) for v in self.grid):
            return tuple(parse_spec(v) for v in self.grid)
        return family_grid(self.family, self.grid)

    def echo(self):
        d = asdict(self)
        for k in _EXECUTION_KEYS:
            d.pop(k)
        return d


@dataclass
class SubgroupRow:
    label: str
    accuracy: float
    n_genuine: int
    n_impostor: int
    threshold: float


@dataclass
class AuditRow:
    intensity: str
    spec: dict
    threshold: float | None
    subgroups: list
    dob: float


@dataclass
class AuditReport:
    config: dict
    rows: list
    provenance: dict
    scores: list = field(default_factory=list, repr=False)

    def to_json(self):
        return {
            "config": self.config,
            "rows": [
                {
                    "intensity": r.intensity,
                    "spec": r.spec,
                    "threshold": r.threshold,
                    "subgroups": [asdict(s) for s in r.subgroups],
                    "dob": r.dob,
                }
                for r in self.rows
            ],
            "provenance": self.provenance,
        }


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Embedder:
    """Caches clean images, keypoints and embeddings keyed by (image_id, spec)."""

    def __init__(self, config, records):
        self.config = config
        self.records = {r.image_id: r for r in records}
        self._images = {}
        self._kps = {}
        self._cache = {}
        if config.provider == "toy":
            self.provider = ToyProvider()
            self.store_path = None
        else:
            self.store_path = Path(config.provider)
            self.provider = StoreProvider(store_read(self.store_path))

    def _image(self, image_id):
        img = self._images.get(image_id)
        if img is None:
            img = self._images[image_id] = load_image(self.records[image_id].path)
        return img

    def _keypoints(self, image_id):
        kps = self._kps.get(image_id)
        if kps is None:
            rec = self.records[image_id]
            if rec.keypoints_path is None:
                raise DistAuditError(f"occlusion needs keypoints but {image_id} has no keypoints_path")
            kps = self._kps[image_id] = load_keypoints(rec.keypoints_path)
        return kps

    def _compute(self, image_id, spec):
        img = self._image(image_id)
        if not isinstance(spec, Identity):
            kps = self._keypoints(image_id) if spec.tag == "Occlusion" else None
            img = apply(
                img,
                spec,
                SeedContext(self.config.seed, image_id),
                kps=kps,
                restore=self.config.restore_resolution,
            )
        return self.provider.embed(img)

    def embed_all(self, image_ids, spec):
        """Embeddings of ``image_ids`` under ``spec``, as a dict in input order."""
        todo = [i for i in image_ids if (i, spec.key()) not in self._cache]
        if isinstance(self.provider, StoreProvider):
            keys = [store_key(i, spec) for i in todo]
            missing = self.provider.store.missing(keys)
            if missing:
                raise StoreError(f"embedding store lacks {len(missing)} key(s): {missing}")
            for i, k in zip(todo, keys):
                self._cache[(i, spec.key())] = self.provider.lookup(k)
        elif todo:
            for i in todo:  # load serially so worker threads only read the caches
                self._image(i)
                if spec.tag == "Occlusion":
                    self._keypoints(i)
            threads = max(1, int(self.config.threads))
            if threads == 1:
                vecs = [self._compute(i, spec) for i in todo]
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    vecs = list(pool.map(lambda i: self._compute(i, spec), todo))
            for i, v in zip(todo, vecs):
                self._cache[(i, spec.key())] = v
        return {i: self._cache[(i, spec.key())] for i in image_ids}

    def input_digest(self, image_ids):
        h = hashlib.sha256()
        for i in sorted(image_ids):
            h.update(i.encode("utf-8") + b"\0" + _sha256_file(self.records[i].path).encode("ascii"))
        return h.hexdigest()


def _prepare(config):
    records = load_manifest(config.manifest)
    if config.balance:
        records = balance_manifest(records, config.axis, control_axis_for(config.axis), config.seed)
    return records


def _protocol_digest(protocol):
    h = hashlib.sha256()
    for p in protocol.pairs():
        h.update(f"{p.split},{int(p.genuine)},{p.probe_id},{p.gallery_id},{p.subgroup}\n".encode("utf-8"))
    return h.hexdigest()


def run_audit(config):
    """Run every intensity of the configured grid (baseline first) and build the report."""
    records = _prepare(config)
    protocol = generate_pairs(records, config.axis, config.seed)
    embedder = _Embedder(config, records)
    pairs = list(protocol.pairs())
    probes = sorted({p.probe_id for p in pairs})
    galleries = sorted({p.gallery_id for p in pairs})
    gallery_vecs = embedder.embed_all(galleries, Identity())

    rows, scores = [], []
    for spec in (Identity(),) + tuple(config.specs()):
        label = spec.label()
        probe_vecs = embedder.embed_all(probes, spec)
        sets = {sg: ScoreSet(sg) for sg in protocol.axis.subgroups}
        for n, p in enumerate(pairs):
            s = cosine_similarity(probe_vecs[p.probe_id], gallery_vecs[p.gallery_id], zero_policy="basis")
            (sets[p.subgroup].genuine if p.genuine else sets[p.subgroup].impostor).append(s)
            scores.append((f"{label}#{n:05d}", p.subgroup, int(p.genuine), s))
        ordered = [sets[sg] for sg in protocol.axis.subgroups]
        summary, thresholds = summarize(ordered, far=config.far, scope=config.threshold_scope)
        rows.append(
            AuditRow(
                intensity=label,
                spec=spec.to_json(),
                threshold=thresholds[ordered[0].subgroup] if config.threshold_scope == "pooled" else None,
                subgroups=[
                    SubgroupRow(a.subgroup, a.accuracy, len(s.genuine), len(s.impostor), thresholds[a.subgroup])
                    for a, s in zip(summary.accuracies, ordered)
                ],
                dob=summary.dob,
            )
        )
        log.info("intensity %s: dob %.4f", label, summary.dob)

    provenance = {
        "tool": "distaudit",
        "version": __version__,
        "seed": config.seed,
        "rng": RNG_NAME,
        "far": config.far,
        "threshold_scope": config.threshold_scope,
        "accuracy_pooling": "all pairs of all splits",
        "subject_disjoint_splits": protocol.subject_disjoint,
        "n_pairs": len(pairs),
        "inputs": {
            "manifest_sha256": _sha256_file(config.manifest),
            "images_sha256": embedder.input_digest(set(probes) | set(galleries)),
            "pairs_sha256": _protocol_digest(protocol),
            "store_sha256": _sha256_file(embedder.store_path) if embedder.store_path else None,
        },
    }
    return AuditReport(config=config.echo(), rows=rows, provenance=provenance, scores=scores)


def _dump_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_report(report, out_dir):
    """Write report.json, report.csv, scores.csv and provenance.json; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _dump_json(report.to_json(), out / "report.json")
    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intensity", "subgroup", "accuracy", "n_genuine", "n_impostor", "threshold"])
        for row in report.rows:
            for s in row.subgroups:
                w.writerow([row.intensity, s.label, f"{s.accuracy:.4f}", s.n_genuine, s.n_impostor, repr(s.threshold)])
            w.writerow([row.intensity, "DoB", f"{row.dob:.4f}", "", "", ""])
    write_scores(report.scores, out / "scores.csv")
    _dump_json({"config": report.config, **report.provenance}, out / "provenance.json")
    return [out / f for f in REPORT_FILES]


def write_scores(scores, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_id", "subgroup", "label", "score"])
        for pair_id, sg, label, s in scores:
            w.writerow([pair_id, sg, label, repr(s)])


def run_similarity_study(config):
    """Clean-vs-distorted similarity per subgroup across the grid (baseline first)."""
    records = _prepare(config)
    embedder = _Embedder(config, records)
    ids = sorted(r.image_id for r in records)
    partition = {}
    for r in sorted(records, key=lambda r: r.image_id):
        partition.setdefault(subgroup_label(r, config.axis), []).append(r.image_id)
    partition = dict(sorted(partition.items()))
    clean = embedder.embed_all(ids, Identity())
    distorted = {}
    for spec in (Identity(),) + tuple(config.specs()):
        distorted[spec.label()] = embedder.embed_all(ids, spec)
    return similarity_curve(clean, distorted, partition)


def write_curves(points, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intensity", "subgroup", "mean_similarity", "std_similarity", "n"])
        for p in points:
            w.writerow([p.intensity, p.subgroup, repr(p.mean), repr(p.std), p.n])

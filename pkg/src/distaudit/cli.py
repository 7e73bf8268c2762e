"""``distaudit`` command line: distort, pairs, embed, match, audit, curves, validate, synth.

Exit codes: 0 success, 1 validation or data failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .audit import (
    AuditConfig,
    _sha256_file,
    run_audit,
    run_similarity_study,
    write_curves,
    write_report,
    write_scores,
)
from .distort import RNG_NAME, SeedContext, apply
from .embed import EmbeddingStore, ToyProvider, cosine_similarity, store_key, store_read, store_write
from .errors import DistAuditError, SpecError
from .imgcore import image_extension, load_image, save_image
from .landmarks import load_keypoints
from .protocol import (
    AXES,
    balance_manifest,
    control_axis_for,
    generate_pairs,
    load_manifest,
    read_pairs,
    validate_protocol,
    write_pairs,
)
from .specs import Occlusion, parse_spec

log = logging.getLogger("distaudit")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _spec_arg(text):
    if text.startswith("@"):
        text = Path(text[1:]).read_text()
    return parse_spec(text)


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _provenance(command, config, inputs):
    return {"tool": "distaudit", "version": __version__, "command": command, "config": config, "inputs": inputs}


# -- subcommands ---------------------------------------------------------------------


def cmd_distort(args):
    spec = _spec_arg(args.spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    src = Path(args.inp)
    if src.suffix.lower() == ".csv":
        jobs = [(r.image_id, r.path, r.keypoints_path) for r in load_manifest(src)]
    else:
        jobs = [(src.stem, str(src), args.keypoints)]
    for item_id, path, kp_path in jobs:
        kps = None
        if isinstance(spec, Occlusion):
            if not kp_path:
                raise UsageError(f"Occlusion needs keypoints for {item_id} (use --keypoints)")
            kps = load_keypoints(kp_path)
        img = load_image(path)
        result = apply(img, spec, SeedContext(args.seed, item_id), kps=kps, restore=args.restore)
        target = out / f"{item_id}{image_extension(result)}"
        save_image(result, target)
        _write_json(
            {
                "item_id": item_id,
                "spec": spec.to_json(),
                "seed": args.seed,
                "rng": RNG_NAME,
                "source_sha256": _sha256_file(path),
                "output": target.name,
                "output_sha256": _sha256_file(target),
                "content_sha256": result.sha256(),
            },
            out / f"{item_id}.json",
        )
    _write_json(
        _provenance("distort", {"spec": spec.to_json(), "seed": args.seed, "restore": args.restore},
                    {"input": str(src), "input_sha256": _sha256_file(src), "n_images": len(jobs)}),
        out / "provenance.json",
    )
    log.info("wrote %d image(s) to %s", len(jobs), out)
    return EXIT_OK


def cmd_pairs(args):
    records = load_manifest(args.manifest)
    if args.balance:
        records = balance_manifest(records, args.axis, control_axis_for(args.axis), args.seed)
    protocol = generate_pairs(records, args.axis, args.seed)
    write_pairs(protocol, args.out)
    _write_json(
        _provenance("pairs", {"axis": args.axis, "seed": args.seed, "balance": args.balance},
                    {"manifest_sha256": _sha256_file(args.manifest),
                     "subject_disjoint_splits": protocol.subject_disjoint}),
        f"{args.out}.provenance.json",
    )
    log.info("wrote %d pairs to %s", len(protocol), args.out)
    return EXIT_OK


def cmd_embed(args):
    records = load_manifest(args.manifest)
    spec = _spec_arg(args.spec) if args.spec else None
    provider = ToyProvider()
    store = EmbeddingStore(provider.dim)
    for r in sorted(records, key=lambda r: r.image_id):
        img = load_image(r.path)
        if spec is not None:
            kps = load_keypoints(r.keypoints_path) if isinstance(spec, Occlusion) and r.keypoints_path else None
            img = apply(img, spec, SeedContext(args.seed, r.image_id), kps=kps, restore=args.restore)
        store.add(store_key(r.image_id, spec), provider.embed(img))
    store_write(store, args.out)
    _write_json(
        _provenance("embed", {"spec": spec.to_json() if spec else None, "seed": args.seed, "provider": "toy"},
                    {"manifest_sha256": _sha256_file(args.manifest)}),
        f"{args.out}.provenance.json",
    )
    return EXIT_OK


def cmd_match(args):
    protocol = read_pairs(args.pairs)
    store = store_read(args.store)
    spec = _spec_arg(args.spec) if args.spec else None
    needed = []
    for p in protocol.pairs():
        needed += [store_key(p.probe_id, spec), store_key(p.gallery_id)]
    missing = sorted(set(store.missing(needed)))
    if missing:
        raise DistAuditError(f"embedding store lacks {len(missing)} key(s): {missing}")
    scores = []
    for n, p in enumerate(protocol.pairs()):
        s = cosine_similarity(store[store_key(p.probe_id, spec)], store[store_key(p.gallery_id)], zero_policy="basis")
        scores.append((f"{n:05d}", p.subgroup, int(p.genuine), s))
    write_scores(scores, args.out)
    _write_json(
        _provenance("match", {"spec": spec.to_json() if spec else None},
                    {"pairs_sha256": _sha256_file(args.pairs), "store_sha256": _sha256_file(args.store)}),
        f"{args.out}.provenance.json",
    )
    return EXIT_OK


_CONFIG_FLAGS = {
    "manifest": dict(type=str),
    "axis": dict(choices=AXES),
    "family": dict(type=str),
    "grid": dict(type=str, help="JSON list of intensities"),
    "provider": dict(type=str, help="'toy' or an embedding store path"),
    "seed": dict(type=_u64),
    "far": dict(type=float),
    "threshold_scope": dict(choices=("pooled", "subgroup")),
    "restore_resolution": dict(type=lambda s: s.lower() in ("1", "true", "yes", "on")),
    "balance": dict(type=lambda s: s.lower() in ("1", "true", "yes", "on")),
    "out_dir": dict(type=str),
    "threads": dict(type=_positive_int),
}


def _load_config(args):
    data = {}
    base = Path.cwd()
    if args.config:
        cfg_path = Path(args.config)
        try:
            data = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"{cfg_path}: invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError(f"{cfg_path}: config must be a JSON object")
        base = cfg_path.parent
        for key in ("manifest", "out_dir"):
            if key in data and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        if data.get("provider", "toy") != "toy" and not Path(data["provider"]).is_absolute():
            data["provider"] = str(base / data["provider"])
    for key in _CONFIG_FLAGS:
        value = getattr(args, key)
        if value is not None:
            if key == "grid":
                try:
                    value = json.loads(value)
                except json.JSONDecodeError as exc:
                    raise UsageError(f"--grid: invalid JSON: {exc}") from None
            data[key] = value
    return AuditConfig.from_dict(data)


def cmd_audit(args):
    config = _load_config(args)
    report = run_audit(config)
    paths = write_report(report, config.out_dir)
    for row in report.rows:
        accs = "  ".join(f"{s.label} {s.accuracy:6.2f}" for s in row.subgroups)
        print(f"{row.intensity:>10}  {accs}  DoB {row.dob:6.2f}")
    log.info("wrote %s", ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_curves(args):
    config = _load_config(args)
    points = run_similarity_study(config)
    out = Path(args.out) if args.out else Path(config.out_dir) / "curves.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_curves(points, out)
    _write_json(
        _provenance("curves", config.echo(), {"manifest_sha256": _sha256_file(config.manifest)}),
        f"{out}.provenance.json",
    )
    return EXIT_OK


def cmd_validate(args):
    records = load_manifest(args.manifest) if args.manifest else None
    protocol = read_pairs(args.pairs, axis_name=args.axis or "custom")
    report = validate_protocol(protocol, records)
    print(report)
    return EXIT_OK if report.ok else EXIT_FAIL


def cmd_synth(args):
    from .synth import build_synthetic

    manifest = build_synthetic(args.out, seed=args.seed, subjects_per_cell=args.subjects_per_cell,
                               images_per_subject=args.images_per_subject)
    print(manifest)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def _flag(parser, name, **kw):
    names = [f"--{name}"]
    if "_" in name:
        names.append(f"--{name.replace('_', '-')}")
    parser.add_argument(*names, dest=name, **kw)


def build_parser():
    parser = argparse.ArgumentParser(prog="distaudit", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version", version=f"distaudit {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("distort", help="apply one distortion to an image or a manifest", allow_abbrev=False)
    p.add_argument("--spec", required=True, help='JSON like {"GaussianBlur":{"sigma":2.0}} or @file')
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--in", dest="inp", required=True, help="image file or manifest CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--keypoints", help="keypoint file for a single-image occlusion")
    p.add_argument("--no-restore", dest="restore", action="store_false",
                   help="keep reduced resolution instead of restoring the original size")
    p.set_defaults(func=cmd_distort)

    p = sub.add_parser("pairs", help="generate the 10-split verification protocol", allow_abbrev=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", default="pairs.csv")
    p.add_argument("--no-balance", dest="balance", action="store_false")
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("embed", help="toy embeddings for every manifest image", allow_abbrev=False)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="store path (.emb binary or .csv)")
    p.add_argument("--spec", help="distort images first; keys become image_id|spec")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--no-restore", dest="restore", action="store_false")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("match", help="score a pairs file against an embedding store", allow_abbrev=False)
    p.add_argument("--pairs", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--spec", help="look up probes under this distortion")
    p.add_argument("--out", default="scores.csv")
    p.set_defaults(func=cmd_match)

    for name, func, helptext in (
        ("audit", cmd_audit, "full bias audit over an intensity grid"),
        ("curves", cmd_curves, "clean-vs-distorted similarity curves"),
    ):
        p = sub.add_parser(name, help=helptext, allow_abbrev=False)
        p.add_argument("--config", help="JSON config file")
        for key, kw in _CONFIG_FLAGS.items():
            _flag(p, key, default=None, **kw)
        if name == "curves":
            p.add_argument("--out", help="curve CSV path (default: <out_dir>/curves.csv)")
        p.set_defaults(func=func)

    p = sub.add_parser("validate", help="check a pairs file against the protocol invariants", allow_abbrev=False)
    p.add_argument("--pairs", required=True)
    p.add_argument("--manifest")
    p.add_argument("--axis", choices=AXES)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="build the synthetic face dataset", allow_abbrev=False)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--subjects-per-cell", type=_positive_int, default=25)
    p.add_argument("--images-per-subject", type=_positive_int, default=12)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (SpecError, UsageError) as exc:
        field = getattr(exc, "field", None)
        print(f"distaudit {args.command}: usage error: {exc}" + (f" [field: {field}]" if field else ""),
              file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except (DistAuditError, OSError, KeyError, ValueError) as exc:
        print(f"distaudit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

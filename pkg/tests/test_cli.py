import json

import numpy as np
import pytest

from distaudit.audit import REPORT_FILES
from distaudit.cli import main
from distaudit.imgcore import Image, load_image, save_image
from distaudit.protocol import load_manifest


def _gray(n):
    return Image(np.arange(n * n, dtype=np.uint8).reshape(n, n, 1))


def test_audit_with_config(synthetic_manifest, tmp_path, capsys):
    cfg = {"manifest": str(synthetic_manifest), "family": "brightness", "grid": [0.5], "out_dir": "out"}
    path = tmp_path / "audit.json"
    path.write_text(json.dumps(cfg))
    assert main(["audit", "--config", str(path), "--threads", "2"]) == 0
    for name in REPORT_FILES:
        assert (tmp_path / "out" / name).is_file()
    out = capsys.readouterr().out
    assert "DoB" in out and "none" in out


def test_pairs_byte_identical(synthetic_manifest, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["pairs", "--manifest", str(synthetic_manifest), "--axis", "race", "--seed", "4", "--out", str(a)]) == 0
    assert main(["pairs", "--manifest", str(synthetic_manifest), "--axis", "race", "--seed", "4", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 12001
    assert main(["validate", "--pairs", str(a), "--manifest", str(synthetic_manifest), "--axis", "race"]) == 0


def test_validate_flags_mutation(synthetic_manifest, tmp_path, capsys):
    path = tmp_path / "p.csv"
    assert main(["pairs", "--manifest", str(synthetic_manifest), "--axis", "gender", "--out", str(path)]) == 0
    lines = path.read_text().splitlines()
    # copy the first pair of split 1 into split 2 in place of one of its pairs of the same label
    first = lines[1].split(",")
    for n, line in enumerate(lines):
        f = line.split(",")
        if f[0] == "2" and f[1] == first[1] and f[4] == first[4]:
            lines[n] = ",".join(["2"] + first[1:])
            break
    path.write_text("\n".join(lines) + "\n")
    capsys.readouterr()
    assert main(["validate", "--pairs", str(path), "--manifest", str(synthetic_manifest)]) == 1
    assert "disjointness" in capsys.readouterr().out


def test_invalid_spec_names_field(tmp_path, capsys):
    img = tmp_path / "x.pgm"
    save_image(_gray(16), img)
    code = main(["distort", "--spec", '{"GaussianBlur": {"sigma": -1}}', "--in", str(img), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "[field: sigma]" in err and "usage:" in err


def test_unknown_flag(capsys):
    assert main(["pairs", "--manifest", "m.csv", "--axis", "gender", "--bogus"]) == 2
    assert main(["audit", "--thread", "2"]) == 2


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"manifest": "m.csv", "sigmas": [1]}))
    assert main(["audit", "--config", str(path)]) == 2
    assert "[field: sigmas]" in capsys.readouterr().err


def test_distort_single_and_sidecar(tmp_path):
    src = tmp_path / "x.pgm"
    save_image(_gray(32), src)
    out = tmp_path / "o"
    assert main(["distort", "--spec", '{"GaussianNoise": {"sigma": 5}}', "--seed", "3", "--in", str(src),
                 "--out", str(out)]) == 0
    side = json.loads((out / "x.json").read_text())
    assert side["spec"] == {"GaussianNoise": {"sigma": 5.0}}
    assert side["seed"] == 3 and side["output"] == "x.pgm"
    assert side["content_sha256"] == load_image(out / "x.pgm").sha256()
    first = (out / "x.pgm").read_bytes()
    assert main(["distort", "--spec", '{"GaussianNoise": {"sigma": 5}}', "--seed", "3", "--in", str(src),
                 "--out", str(out)]) == 0
    assert (out / "x.pgm").read_bytes() == first
    assert (out / "provenance.json").is_file()


def test_distort_resolution_no_restore(tmp_path):
    src = tmp_path / "x.pgm"
    save_image(_gray(32), src)
    assert main(["distort", "--spec", '{"Resolution": {"w": 8, "h": 4}}', "--in", str(src), "--out",
                 str(tmp_path / "o"), "--no-restore"]) == 0
    img = load_image(tmp_path / "o" / "x.pgm")
    assert (img.width, img.height) == (8, 4)


def test_distort_occlusion_needs_keypoints(tmp_path, capsys):
    src = tmp_path / "x.pgm"
    save_image(_gray(32), src)
    assert main(["distort", "--spec", '{"Occlusion": {"region": "Eyes"}}', "--in", str(src), "--out",
                 str(tmp_path / "o")]) == 2


@pytest.mark.parametrize("suffix", [".emb", ".csv"])
def test_embed_then_match(synthetic_manifest, tmp_path, suffix):
    store = tmp_path / f"store{suffix}"
    pairs = tmp_path / "pairs.csv"
    scores = tmp_path / "scores.csv"
    assert main(["embed", "--manifest", str(synthetic_manifest), "--out", str(store)]) == 0
    assert main(["pairs", "--manifest", str(synthetic_manifest), "--axis", "gender", "--out", str(pairs)]) == 0
    assert main(["match", "--pairs", str(pairs), "--store", str(store), "--out", str(scores)]) == 0
    rows = scores.read_text().splitlines()
    assert rows[0] == "pair_id,subgroup,label,score" and len(rows) == 12001
    assert all(-1.0 <= float(r.split(",")[3]) <= 1.0 for r in rows[1:])
    # probes under a distortion the store lacks
    assert main(["match", "--pairs", str(pairs), "--store", str(store), "--spec", '{"Brightness": {"beta": 0.5}}',
                 "--out", str(scores)]) == 1


def test_curves(synthetic_manifest, tmp_path):
    out = tmp_path / "curves.csv"
    assert main(["curves", "--manifest", str(synthetic_manifest), "--family", "blur", "--grid", "[4.0]",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "intensity,subgroup,mean_similarity,std_similarity,n"
    assert len(lines) == 1 + 2 * 2
    assert (tmp_path / "curves.csv.provenance.json").is_file()


def test_synth(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "s"), "--subjects-per-cell", "2", "--images-per-subject", "2"]) == 0
    assert len(load_manifest(tmp_path / "s" / "manifest.csv")) == 16

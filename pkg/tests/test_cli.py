import json

import numpy as np
import pytest
from conftest import make_batch

from nightforge.cli import EXIT_CONFIG, EXIT_DRIFT, EXIT_OK, EXIT_STRICT, main
from nightforge.fusion import FusionParams, concat_aux, fusion_forward, illumination_guidance, save_params
from nightforge.imageio import read_pfm, write_pfm
from nightforge.pipeline import MANIFEST_NAME, read_manifest


def synth(tmp_path, asset_dir, n=2, *extra):
    manifest = make_batch(tmp_path / "in", n)
    argv = ["synth", "--input", str(manifest), "--assets", str(asset_dir), "--out", str(tmp_path / "out"), "--seed", "3"]
    return main(argv + list(extra))


def test_synth_then_verify(tmp_path, asset_dir, capsys):
    assert synth(tmp_path, asset_dir, 2, "--emit-guidance") == EXIT_OK
    out = tmp_path / "out"
    assert len(list(out.glob("*_guidance.pfm"))) == 2
    assert main(["verify", "--manifest", str(out / MANIFEST_NAME)]) == EXIT_OK
    assert "0 drifted" in capsys.readouterr().out


def test_verify_reports_drift(tmp_path, asset_dir, capsys):
    synth(tmp_path, asset_dir, 2)
    rec = read_manifest(tmp_path / "out" / MANIFEST_NAME)[0]
    target = tmp_path / "out" / rec["outputs"]["night"]
    target.write_bytes(target.read_bytes() + b"\0")
    assert main(["verify", "--manifest", str(tmp_path / "out" / MANIFEST_NAME)]) == EXIT_DRIFT
    assert f"DRIFT {target.name}" in capsys.readouterr().out


def test_synth_without_guidance_flag(tmp_path, asset_dir):
    synth(tmp_path, asset_dir, 1)
    assert not list((tmp_path / "out").glob("*_guidance.pfm"))


def test_synth_strict_exit_code(tmp_path, asset_dir):
    manifest = make_batch(tmp_path / "in", 2)
    (tmp_path / "in" / "day_01.pfm").write_bytes(b"junk")
    argv = ["synth", "--input", str(manifest), "--assets", str(asset_dir), "--out", str(tmp_path / "out")]
    assert main(argv + ["--strict"]) == EXIT_STRICT
    assert main(argv) == EXIT_OK


def test_synth_bad_config_exit_code(tmp_path, asset_dir):
    (tmp_path / "c.yaml").write_text("unknown_key: 1\n")
    manifest = make_batch(tmp_path / "in", 1)
    argv = ["synth", "--input", str(manifest), "--config", str(tmp_path / "c.yaml"), "--assets", str(asset_dir)]
    assert main(argv) == EXIT_CONFIG


def test_synth_missing_manifest(tmp_path, asset_dir):
    assert main(["synth", "--input", str(tmp_path / "nope.tsv"), "--assets", str(asset_dir)]) == EXIT_CONFIG


def test_synth_config_file(tmp_path, asset_dir):
    (tmp_path / "c.yaml").write_text(f"asset_dir: {asset_dir}\noutput_dir: {tmp_path / 'out'}\nglobal_seed: 3\n")
    manifest = make_batch(tmp_path / "in", 1)
    assert main(["synth", "--input", str(manifest), "--config", str(tmp_path / "c.yaml")]) == EXIT_OK
    assert read_manifest(tmp_path / "out" / MANIFEST_NAME)[0]["per_image_seed"] >= 0


def test_fuse_init_and_fuse(tmp_path):
    params_path = tmp_path / "p.bin"
    assert main(["fuse-init", "--out", str(params_path), "--c3", "5", "--seed", "2"]) == EXIT_OK
    night = np.random.default_rng(0).random((9, 11, 3)).astype(np.float32)
    write_pfm(tmp_path / "n.pfm", night)
    assert main(["fuse", "--input", str(tmp_path / "n.pfm"), "--params", str(params_path), "--out", str(tmp_path / "f.pfm")]) == EXIT_OK
    got = read_pfm(tmp_path / "f.pfm")
    n64 = night.astype(np.float64)
    ref, _ = fusion_forward(concat_aux(n64, illumination_guidance(n64)), FusionParams.init(4, 5, 3, seed=2))
    np.testing.assert_allclose(got, ref, atol=1e-6)


def test_fuse_with_explicit_guidance(tmp_path):
    save_params(tmp_path / "p.bin", FusionParams.init(4, 4, 3))
    write_pfm(tmp_path / "n.pfm", np.zeros((5, 5, 3), np.float32))
    write_pfm(tmp_path / "g.pfm", np.zeros((4, 5, 1), np.float32))
    argv = ["fuse", "--input", str(tmp_path / "n.pfm"), "--guidance", str(tmp_path / "g.pfm")]
    assert main(argv + ["--params", str(tmp_path / "p.bin"), "--out", str(tmp_path / "o.pfm")]) == EXIT_CONFIG


def test_eval_report(tmp_path, capsys):
    (tmp_path / "pred").mkdir()
    (tmp_path / "gt").mkdir()
    gt = np.array([[1.0, 2.0, 4.0]], np.float32)
    write_pfm(tmp_path / "gt" / "a.pfm", gt)
    write_pfm(tmp_path / "pred" / "a.pfm", np.array([[1.1, 1.8, 4.4]], np.float32))
    write_pfm(tmp_path / "gt" / "b.pfm", gt)
    write_pfm(tmp_path / "pred" / "b.pfm", gt)
    argv = ["eval", "--pred-dir", str(tmp_path / "pred"), "--gt-dir", str(tmp_path / "gt")]
    assert main(argv + ["--max-depth", "80", "--report", str(tmp_path / "r.json")]) == EXIT_OK
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["per_image"]["a.pfm"]["abs_rel"] == pytest.approx(0.1, abs=1e-6)
    assert doc["per_image"]["b.pfm"]["abs_rel"] == 0.0
    assert doc["aggregate"]["abs_rel"] == pytest.approx(0.05, abs=1e-6)
    assert doc["aggregate"]["n_valid"] == 6
    assert "2 image(s)" in capsys.readouterr().out


def test_eval_no_pairs(tmp_path):
    (tmp_path / "pred").mkdir()
    argv = ["eval", "--pred-dir", str(tmp_path / "pred"), "--gt-dir", str(tmp_path), "--max-depth", "80"]
    assert main(argv + ["--report", str(tmp_path / "r.json")]) == EXIT_CONFIG

import json
import subprocess
import sys

import numpy as np
import pytest

from hypersolid import config
from hypersolid.cli import main
from hypersolid.views import read_hseb, save_embeddings, save_labels

SMALL = ["--set", "data.size=256", "--set", "data.dim=16", "--set", "encoder.hidden_dims=32",
         "--set", "encoder.projector_dim=16", "--set", "train.probe_every=0"]


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert run("train", "--epochs", 1, "--seed", 7, "--threads", 1, "--out-dir", out, *SMALL) == 0
    return out


def test_train_artifacts(trained):
    for name in ("checkpoint.hsck", "epochs.csv", "train.manifest.json"):
        assert (trained / name).exists()
    manifest = json.loads((trained / "train.manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 7
    assert set(manifest["config"]) == set(config.SCHEMA)
    assert manifest["config"]["loss.alpha"] == "0.9"


def test_train_rerun_identical(trained, tmp_path):
    assert run("train", "--epochs", 1, "--seed", 7, "--threads", 1, "--out-dir", tmp_path, *SMALL) == 0
    for name in ("epochs.csv", "checkpoint.hsck"):
        assert (tmp_path / name).read_bytes() == (trained / name).read_bytes()


def test_rerun_from_manifest(trained, tmp_path):
    assert run("train", "--config", trained / "train.manifest.json", "--threads", 1, "--out-dir", tmp_path) == 0
    assert (tmp_path / "checkpoint.hsck").read_bytes() == (trained / "checkpoint.hsck").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# small run\nloss.alpha=0.8\ntrain.epochs=3\n" + "".join(
        s + "\n" for s in SMALL[1::2]))
    out = tmp_path / "out"
    assert run("train", "--config", cfg, "--epochs", 1, "--out-dir", out) == 0
    m = json.loads((out / "train.manifest.json").read_text())["config"]
    assert m["loss.alpha"] == "0.8" and m["train.epochs"] == "1"


def test_unknown_key_writes_nothing(tmp_path, capsys):
    out = tmp_path / "out"
    assert run("train", "--set", "loss.alpah=0.5", "--out-dir", out) == 2
    assert "loss.alpha" in capsys.readouterr().err
    assert not out.exists()


def test_alpha_one_rejected(tmp_path):
    out = tmp_path / "out"
    assert run("train", "--alpha", 1.0, "--out-dir", out) == 2
    assert not out.exists()


def test_export_shapes_and_dtypes(trained, tmp_path):
    assert run("export-embeddings", "--checkpoint", trained / "checkpoint.hsck", "--out-dir", tmp_path / "a") == 0
    e64 = read_hseb(tmp_path / "a" / "embeddings.hseb")
    assert e64.shape == (256, 16)
    assert len((tmp_path / "a" / "labels.txt").read_text().split()) == 256
    assert run("export-embeddings", "--checkpoint", trained / "checkpoint.hsck", "--dtype", "f32",
               "--out-dir", tmp_path / "b") == 0
    e32 = read_hseb(tmp_path / "b" / "embeddings.hseb")
    np.testing.assert_allclose(e32, e64, rtol=2 ** -23, atol=1e-30)
    assert (tmp_path / "a" / "embeddings.hseb").stat().st_size > (tmp_path / "b" / "embeddings.hseb").stat().st_size


def test_export_corrupt_checkpoint(trained, tmp_path):
    bad = tmp_path / "bad.hsck"
    bad.write_bytes((trained / "checkpoint.hsck").read_bytes()[:-5])
    assert run("export-embeddings", "--checkpoint", bad, "--out-dir", tmp_path / "o") == 3
    assert run("export-embeddings", "--checkpoint", tmp_path / "missing.hsck", "--out-dir", tmp_path / "o") == 3


@pytest.mark.filterwarnings("ignore:classes .* single member")
def test_analyze_basis_fixture(tmp_path):
    save_embeddings(tmp_path / "b.hseb", np.eye(8))
    save_labels(tmp_path / "b.txt", range(8))
    out = tmp_path / "out"
    assert run("analyze", "--embeddings", tmp_path / "b.hseb", "--labels", tmp_path / "b.txt",
               "--out-dir", out, "--name", "basis") == 0
    header, row = (out / "geometry.csv").read_text().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert float(rec["mpa_degrees"]) == pytest.approx(90.0, abs=1e-9)
    assert float(rec["cvn"]) == pytest.approx(8 ** -0.5)
    first = (out / "geometry.csv").read_bytes(), (out / "similarity_hist.csv").read_bytes()
    assert run("analyze", "--embeddings", tmp_path / "b.hseb", "--labels", tmp_path / "b.txt",
               "--out-dir", out, "--name", "basis") == 0
    assert ((out / "geometry.csv").read_bytes(), (out / "similarity_hist.csv").read_bytes()) == first


def test_analyze_without_labels(tmp_path, rng):
    save_embeddings(tmp_path / "x.hseb", rng.standard_normal((50, 4)))
    with pytest.warns(UserWarning, match="no labels"):
        assert run("analyze", "--embeddings", tmp_path / "x.hseb", "--out-dir", tmp_path) == 0
    header, row = (tmp_path / "geometry.csv").read_text().splitlines()
    rec = dict(zip(header.split(","), row.split(",")))
    assert rec["d_prime"] == "" and rec["centroid_rank"] == ""
    assert not (tmp_path / "similarity_hist.csv").exists()


def test_analyze_bad_file(tmp_path):
    (tmp_path / "x.hseb").write_bytes(b"nope")
    assert run("analyze", "--embeddings", tmp_path / "x.hseb", "--out-dir", tmp_path) == 3


def test_walk_probe_invert(trained, tmp_path):
    ck = trained / "checkpoint.hsck"
    assert run("export-embeddings", "--checkpoint", ck, "--out-dir", tmp_path) == 0
    assert run("export-embeddings", "--checkpoint", ck, "--sample-seed", 5, "--out-dir", tmp_path / "test") == 0
    emb, lab = tmp_path / "embeddings.hseb", tmp_path / "labels.txt"
    assert run("walk", "--embeddings", emb, "--labels", lab, "--pairs", 20, "--steps", 5, "--out-dir", tmp_path) == 0
    assert len((tmp_path / "walks.csv").read_text().splitlines()) == 7
    assert run("walk", "--embeddings", tmp_path / "test" / "embeddings.hseb", "--labels",
               tmp_path / "test" / "labels.txt", "--reference", emb, "--pairs", 5, "--out-dir", tmp_path / "w2") == 0
    for _ in range(2):
        assert run("probe", "--train-embeddings", emb, "--train-labels", lab,
                   "--test-embeddings", tmp_path / "test" / "embeddings.hseb",
                   "--test-labels", tmp_path / "test" / "labels.txt", "--probe-epochs", 20,
                   "--out-dir", tmp_path) == 0
    assert len((tmp_path / "probe_results.csv").read_text().splitlines()) == 5
    save_embeddings(tmp_path / "inputs.hseb", np.random.default_rng(0).standard_normal((2, 16)))
    assert run("invert", "--checkpoint", ck, "--input", tmp_path / "inputs.hseb", "--index", 1,
               "--steps-per-scale", 300, "--out-dir", tmp_path / "inv") == 0
    assert read_hseb(tmp_path / "inv" / "inversion.hseb").shape == (1, 16)
    log = json.loads((tmp_path / "inv" / "inversion.jsonl").read_text().splitlines()[0])
    assert log["steps"] == 300
    assert run("invert", "--checkpoint", ck, "--target", tmp_path / "inputs.hseb", "--index", 9,
               "--out-dir", tmp_path / "inv") == 3


def test_inputs_untouched(trained, tmp_path):
    ck = trained / "checkpoint.hsck"
    before = ck.read_bytes()
    run("export-embeddings", "--checkpoint", ck, "--out-dir", tmp_path)
    assert ck.read_bytes() == before


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "hypersolid.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("train", "analyze", "walk", "probe", "invert", "export-embeddings"):
        assert cmd in res.stdout


def test_argparse_errors_are_config_errors():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--epochs", "many"])
    assert exc.value.code == 2


def test_config_parser_errors(tmp_path):
    from hypersolid.errors import ConfigError
    with pytest.raises(ConfigError):
        config.parse_text("loss.alpha\n")
    with pytest.raises(ConfigError):
        config.resolve({"train.epochs": "x"})
    (tmp_path / "m.json").write_text("{}")
    with pytest.raises(ConfigError):
        config.load_file(tmp_path / "m.json")

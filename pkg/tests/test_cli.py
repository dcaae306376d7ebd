"""Command-line interface: subcommands, config layering, exit codes."""

import json

import pytest

from spoofsmith.cli import main


def _run(*argv) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def toy_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("toy")
    assert _run("gen-toy", "--count", "8", "--res", "32",
                "--seed", "1", "--out", str(out)) == 0
    return out


@pytest.fixture(scope="module")
def gan_dir(tmp_path_factory, toy_dir):
    out = tmp_path_factory.mktemp("gan")
    assert _run("train-gan", "--manifest", str(toy_dir / "manifest.jsonl"),
                "--epochs", "1", "--res", "32", "--real-per-iter", "8",
                "--width-scale", "0.125", "--z-dim", "8",
                "--seed", "2", "--out", str(out)) == 0
    return out


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory, gan_dir):
    out = tmp_path_factory.mktemp("synth")
    assert _run("synth", "--ckpt", str(gan_dir / "g.ckpt"),
                "--count", "8", "--seed", "3", "--out", str(out)) == 0
    return out


@pytest.fixture(scope="module")
def pad_dir(tmp_path_factory, toy_dir, synth_dir):
    out = tmp_path_factory.mktemp("pad")
    assert _run("train-pad",
                "--real-manifest", str(toy_dir / "manifest.jsonl"),
                "--attack-manifest", str(synth_dir / "manifest.jsonl"),
                "--epochs", "1", "--res", "32", "--width-scale", "0.125",
                "--head-units", "8", "--batch-size", "4",
                "--seed", "4", "--out", str(out)) == 0
    return out


# -- gen-toy --------------------------------------------------------------

def test_gen_toy_artifacts(toy_dir):
    lines = (toy_dir / "manifest.jsonl").read_text().strip().split("\n")
    assert len(lines) == 8
    assert len(list(toy_dir.glob("*.png"))) == 8


def test_gen_toy_echoes_resolved_config(toy_dir):
    cfg = json.loads((toy_dir / "run_config.json").read_text())
    assert cfg["command"] == "gen-toy"
    assert cfg["count"] == 8 and cfg["res"] == 32 and cfg["seed"] == 1


def test_gen_toy_rerun_bitwise_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert _run("gen-toy", "--count", "3", "--res", "16",
                    "--seed", "7", "--out", str(out)) == 0
    for f in sorted(a.glob("*.png")):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_gen_toy_missing_out_is_usage_error():
    with pytest.raises(SystemExit) as e:
        _run("gen-toy", "--count", "3")
    assert e.value.code == 2


# -- train-gan / synth ----------------------------------------------------

def test_train_gan_artifacts(gan_dir):
    for name in ("g.ckpt", "d.ckpt", "losses.csv", "run_config.json"):
        assert (gan_dir / name).exists()
    lines = (gan_dir / "losses.csv").read_text().strip().split("\n")
    assert lines[0] == "iter,d_loss,g_loss"
    assert len(lines) == 2  # one iteration: 8 reals / real_per_iter 8


def test_train_gan_missing_manifest_is_runtime_error(tmp_path, capsys):
    assert _run("train-gan", "--manifest", str(tmp_path / "nope.jsonl"),
                "--out", str(tmp_path / "o")) == 1
    assert "error:" in capsys.readouterr().err


def test_synth_artifacts(synth_dir):
    assert len(list(synth_dir.glob("synth_*.png"))) == 8
    lines = (synth_dir / "manifest.jsonl").read_text().strip().split("\n")
    assert len(lines) == 8
    assert all(json.loads(ln)["label"] == "attack" for ln in lines)


def test_synth_bad_checkpoint_is_runtime_error(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert _run("synth", "--ckpt", str(bad), "--count", "1",
                "--out", str(tmp_path / "o")) == 1


# -- train-pad / eval -----------------------------------------------------

def test_train_pad_artifacts(pad_dir):
    for name in ("classifier.ckpt", "losses.csv", "test_manifest.jsonl",
                 "report.json", "roc.csv", "run_config.json"):
        assert (pad_dir / name).exists()
    lines = (pad_dir / "losses.csv").read_text().strip().split("\n")
    assert lines[0] == "epoch,train_loss,test_acc"
    report = json.loads((pad_dir / "report.json").read_text())
    assert set(report["confusion"]) == {"tp", "fp", "tn", "fn"}
    assert 0.0 <= report["accuracy"] <= 1.0


def test_train_pad_single_label_is_runtime_error(toy_dir, tmp_path):
    assert _run("train-pad",
                "--real-manifest", str(toy_dir / "manifest.jsonl"),
                "--attack-manifest", str(toy_dir / "manifest.jsonl"),
                "--out", str(tmp_path / "o")) == 1


def test_eval_roundtrip(pad_dir, tmp_path):
    out = tmp_path / "eval"
    assert _run("eval", "--ckpt", str(pad_dir / "classifier.ckpt"),
                "--manifest", str(pad_dir / "test_manifest.jsonl"),
                "--out", str(out)) == 0
    fresh = json.loads((out / "report.json").read_text())
    trained = json.loads((pad_dir / "report.json").read_text())
    assert fresh["confusion"] == trained["confusion"]
    assert fresh["auc"] == trained["auc"]


# -- config file layering -------------------------------------------------

def test_config_file_overrides_defaults_and_flags_win(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"count": 4, "res": 16}))
    out = tmp_path / "out"
    assert _run("gen-toy", "--config", str(cfg), "--res", "32",
                "--out", str(out)) == 0
    resolved = json.loads((out / "run_config.json").read_text())
    assert resolved["count"] == 4      # from file
    assert resolved["res"] == 32       # flag beats file
    assert resolved["seed"] == 0       # builtin default


def test_config_file_unknown_key_is_runtime_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert _run("gen-toy", "--config", str(cfg),
                "--out", str(tmp_path / "o")) == 1


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        _run("frobnicate")
    assert e.value.code == 2

import json

import numpy as np
import pytest

from beam import cli
from beam.experiment import (
    CheckpointError,
    ConfigError,
    METRICS_HEADER,
    bundled_configs,
    evaluate,
    load_checkpoint,
    load_config,
    parse_config_text,
    read_metrics,
    save_checkpoint,
    state_from_json,
    state_to_json,
    zero_model_checkpoint,
)
from beam.datasets import mnist_dir

MINIMAL = "seed = 3\ndataset.source = mog\ndataset.mog = bimodal\nmodel.n_hidden = 4\ntrain.lr = 0.05\n"


@pytest.fixture
def mnist_env(tmp_path_factory, monkeypatch):
    # the real corpus when BEAM_MNIST_DIR is set, else the bundled subset
    path = mnist_dir(tmp_path_factory.getbasetemp() / "mnist-subset")
    monkeypatch.setenv("BEAM_MNIST_DIR", str(path))
    return path


def write_cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestConfig:
    def test_defaults_and_required(self):
        v = parse_config_text(MINIMAL)
        assert v["seed"] == 3 and v["tds.phi"] == 0.9 and v["critic.k"] == 5
        with pytest.raises(ConfigError) as err:
            parse_config_text(MINIMAL.replace("seed = 3\n", ""))
        assert err.value.key == "seed"

    @pytest.mark.parametrize("line,key", [
        ("train.lr = fast", "train.lr"),
        ("model.n_hidden = 2.5", "model.n_hidden"),
        ("critic.weighted = maybe", "critic.weighted"),
        ("bogus.key = 1", "bogus.key"),
    ])
    def test_bad_values_name_the_key(self, line, key):
        with pytest.raises(ConfigError) as err:
            parse_config_text(MINIMAL + line + "\n")
        assert err.value.key == key

    def test_env_expansion(self, monkeypatch):
        monkeypatch.setenv("SOME_DIR", "/data/x")
        v = parse_config_text(MINIMAL + "dataset.path = ${SOME_DIR}/mnist\n")
        assert v["dataset.path"] == "/data/x/mnist"

    def test_check_names_keys(self, tmp_path):
        cases = {
            "dataset.mog = moon\n": "dataset.mog",
            "tds.phi = 1.5\n": "tds",
            "train.gamma = 2\n": "train",
            "critic.k = 1000\n": "critic.k",
            "model.visible = softmax\n": "model.visible",
        }
        for extra, key in cases.items():
            cfg = load_config(write_cfg(tmp_path, MINIMAL + extra))
            with pytest.raises(ConfigError) as err:
                cfg.check()
            assert err.value.key == key

    def test_epochs_override(self, tmp_path):
        cfg = load_config(write_cfg(tmp_path, MINIMAL + "train.epochs_ml = 4\ntrain.epochs_adv = 6\n"))
        a = cfg.with_overrides(epochs="2+3")
        assert (a["train.epochs_ml"], a["train.epochs_adv"]) == (2, 3)
        b = cfg.with_overrides(epochs=4)
        assert (b["train.epochs_ml"], b["train.epochs_adv"]) == (2, 2)


def test_validate_every_bundled_config(mnist_env, capsys):
    configs = bundled_configs()
    assert {c.stem for c in configs} >= {"bimodal", "ring", "grid", "mnist_continuous", "mnist_binary"}
    for c in configs:
        assert cli.main(["validate", str(c)]) == 0
    assert "ok" in capsys.readouterr().out


def test_missing_mnist_path_names_key(tmp_path, monkeypatch, capsys):
    monkeypatch.delenv("BEAM_MNIST_DIR", raising=False)
    cfg = [c for c in bundled_configs() if c.stem == "mnist_binary"][0]
    assert cli.main(["validate", str(cfg)]) == cli.EXIT_CONFIG
    assert "dataset.path" in capsys.readouterr().err
    bad = write_cfg(tmp_path, "seed = 1\ndataset.source = mnist\nmodel.n_hidden = 3\ntrain.lr = 0.1\n")
    assert cli.main(["run", str(bad), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "dataset.path" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    assert cli.main(["validate", str(tmp_path / "nope.cfg")]) == cli.EXIT_CONFIG


SMALL = MINIMAL + """dataset.n_samples = 600
tds.steps = 3
train.batch_size = 50
train.epochs_ml = 2
train.epochs_adv = 2
train.decay = 0.5
output.checkpoint_every = 1
"""


def test_run_outputs_and_reproducibility(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    for name in ("a", "b"):
        assert cli.main(["run", str(cfg), "--out-dir", str(tmp_path / name)]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir())
    assert "samples_epoch004.csv" in files and "checkpoint_epoch002.json" in files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    text = (a / "metrics.csv").read_text().splitlines()
    assert text[0].startswith("# schema:") and text[1] == ",".join(METRICS_HEADER)
    rows = read_metrics(a / "metrics.csv")
    assert [r["phase"] for r in rows] == ["ml", "ml", "adv", "adv"]
    assert [int(r["epoch"]) for r in rows] == [1, 2, 3, 4]
    # full-precision floats survive the round trip
    assert all(float(repr(float(r["forward_kl"]))) == float(r["forward_kl"]) for r in rows)
    samples = np.loadtxt(a / "samples_epoch004.csv", delimiter=",", skiprows=1, ndmin=2)
    assert samples.shape == (50, 1)


def test_seed_flag_changes_output(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "a"), "--epochs-override", "1"])
    cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "b"), "--epochs-override", "1", "--seed", "4"])
    assert (tmp_path / "a/metrics.csv").read_bytes() != (tmp_path / "b/metrics.csv").read_bytes()


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BEAM_OUTPUT_ROOT", str(tmp_path / "root"))
    cfg = write_cfg(tmp_path, SMALL, "named.cfg")
    assert cli.main(["run", str(cfg), "--epochs-override", "1"]) == 0
    assert (tmp_path / "root" / "named" / "metrics.csv").exists()


@pytest.mark.parametrize("at", [1, 2, 3])
def test_resume_equivalence(tmp_path, at):
    cfg = write_cfg(tmp_path, SMALL)
    full, part = tmp_path / "full", tmp_path / "part"
    assert cli.main(["run", str(cfg), "--out-dir", str(full)]) == 0
    assert cli.main(["run", str(cfg), "--out-dir", str(part), "--epochs-override", "2+2"]) == 0
    ckpt = part / f"checkpoint_epoch{at:03d}.json"
    assert cli.main(["resume", str(ckpt), str(cfg), "--out-dir", str(part)]) == 0
    assert (full / "metrics.csv").read_bytes() == (part / "metrics.csv").read_bytes()
    assert (full / "checkpoint_epoch004.json").read_bytes() == (part / "checkpoint_epoch004.json").read_bytes()


def test_checkpoint_round_trip(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o"), "--epochs-override", "1+1"])
    path = tmp_path / "o" / "checkpoint_epoch002.json"
    d = load_checkpoint(path)
    state = state_from_json(d)
    assert state_to_json(state, None) == {k: v for k, v in d.items() if k != "tds"}
    save_checkpoint(tmp_path / "again.json", state_from_json(d))
    again = load_checkpoint(tmp_path / "again.json")
    assert again == {k: v for k, v in d.items() if k != "tds"}
    assert state.cache.ready and state.epoch == 2
    # identical generator state
    assert state.rng.random() == state_from_json(d).rng.random()


def test_version_mismatch_refused(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    cli.main(["run", str(cfg), "--out-dir", str(tmp_path / "o"), "--epochs-override", "1"])
    path = tmp_path / "o" / "checkpoint_epoch001.json"
    d = json.loads(path.read_text())
    d["version"] = 99
    path.write_text(json.dumps(d))
    with pytest.raises(CheckpointError, match="version"):
        state_from_json(d)
    assert cli.main(["resume", str(path), str(cfg), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_CHECKPOINT
    assert "version 99" in capsys.readouterr().err
    assert cli.main(["eval", str(path), "bimodal"]) == cli.EXIT_CHECKPOINT


def test_eval_zero_model_is_far_from_bimodal(tmp_path, capsys):
    ckpt = tmp_path / "zero.json"
    zero_model_checkpoint(ckpt, 1, 5)
    report = evaluate(ckpt, "bimodal", seed=0, steps=50, out_dir=tmp_path / "ev")
    assert report.reverse_kl > 1
    assert (tmp_path / "ev" / "eval_samples.csv").exists()
    assert cli.main(["eval", str(ckpt), "bimodal", "--steps", "10"]) == 0
    assert "reverse_kl" in capsys.readouterr().out


def test_eval_csv_and_config_sources(tmp_path):
    ckpt = tmp_path / "zero.json"
    zero_model_checkpoint(ckpt, 1, 3)
    rows = tmp_path / "rows.csv"
    rows.write_text("v0\n" + "\n".join(str(x) for x in np.linspace(-1, 1, 50)) + "\n")
    assert np.isfinite(evaluate(ckpt, str(rows), steps=5).forward_kl)
    cfg = write_cfg(tmp_path, SMALL)
    assert np.isfinite(evaluate(ckpt, str(cfg), steps=5).forward_kl)
    with pytest.raises(ConfigError):
        evaluate(ckpt, "no-such-thing", steps=5)


def test_mnist_binary_short_run(tmp_path, mnist_env):
    cfg = [c for c in bundled_configs() if c.stem == "mnist_binary"][0]
    text = cfg.read_text() + "dataset.limit = 500\n"
    p = write_cfg(tmp_path, text)
    assert cli.main(["run", str(p), "--out-dir", str(tmp_path / "m"), "--epochs-override", "1+1"]) == 0
    rows = read_metrics(tmp_path / "m" / "metrics.csv")
    assert [r["phase"] for r in rows] == ["ml", "adv"]
    samples = np.loadtxt(tmp_path / "m" / "samples_epoch002.csv", delimiter=",", skiprows=1)
    assert samples.shape == (100, 784) and set(np.unique(samples)) <= {0.0, 1.0}

"""Batch experiment runner.

A run is described by a flat ``key = value`` config file with dotted section
prefixes (``train.lr = 0.1``). Runs write ``metrics.csv``, one
``samples_epochNNN.csv`` per epoch and JSON checkpoints; the same config and
seed reproduce every output byte.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets as ds
from .critic import CriticCache
from .divergences import DivergenceReport, monitor
from .rbm import GradientBundle, LayerKind, RbmModel, visible_conditional
from .tds import ParticlePopulation, TdsConfig, advance, init_population
from .training import (
    AdamState,
    EpochRecord,
    TrainConfig,
    TrainingState,
    init_model,
    new_state,
    train,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "beam-checkpoint"
CHECKPOINT_VERSION = 1
METRICS_SCHEMA = "# schema: beam-metrics/1"
METRICS_HEADER = ["epoch", "phase", "forward_kl", "reverse_kl", "mean_beta", "learning_rate"]
OUTPUT_ROOT_ENV = "BEAM_OUTPUT_ROOT"
BUNDLED_CONFIG_DIR = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class CheckpointError(ValueError):
    pass


# -- config ------------------------------------------------------------------

_REQUIRED = object()

# key -> (type, default)
SCHEMA = {
    "seed": (int, _REQUIRED),
    "output.dir": (str, None),
    "output.checkpoint_every": (int, 0),
    "dataset.source": (str, _REQUIRED),
    "dataset.mog": (str, None),
    "dataset.n_samples": (int, 10_000),
    "dataset.path": (str, None),
    "dataset.variant": (str, "continuous"),
    "dataset.limit": (int, None),
    "dataset.validation_fraction": (float, 0.1),
    "model.visible": (str, "gaussian"),
    "model.n_hidden": (int, _REQUIRED),
    "model.weight_std": (float, 0.01),
    "model.learn_scale": (bool, True),
    "tds.phi": (float, 0.9),
    "tds.beta_std": (float, 0.9),
    "tds.steps": (int, 1),
    "train.gamma": (float, 0.5),
    "train.lr": (float, _REQUIRED),
    "train.lr_adv": (float, None),
    "train.decay": (float, 0.0),
    "train.adam_beta1": (float, 0.9),
    "train.adam_beta2": (float, 0.999),
    "train.adam_eps": (float, 1e-8),
    "train.epochs_ml": (int, 0),
    "train.epochs_adv": (int, 10),
    "train.batch_size": (int, 100),
    "train.monitor_batch": (int, None),
    "critic.k": (int, 5),
    "critic.epsilon": (float, 1e-3),
    "critic.weighted": (bool, True),
}

_ENV_REF = re.compile(r"\$\{(\w+)\}")


def _convert(key, typ, text):
    text = _ENV_REF.sub(lambda m: os.environ.get(m.group(1), ""), text).strip()
    if text == "" or text.lower() == "none":
        return None
    try:
        if typ is bool:
            lowered = text.lower()
            if lowered not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(text)
            return lowered in ("true", "yes", "1")
        if typ is int:
            number = int(text) if re.fullmatch(r"[+-]?\d+", text) else float(text)
            if number != int(number):
                raise ValueError(text)
            return int(number)
        return typ(text)
    except ValueError:
        raise ConfigError(key, f"cannot parse {text!r} as {typ.__name__}") from None


def parse_config_text(text: str) -> dict:
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", "expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(key, "unknown key")
        raw[key] = _convert(key, SCHEMA[key][0], value)
    values = {}
    for key, (_, default) in SCHEMA.items():
        value = raw.get(key)
        if value is None:
            if default is _REQUIRED:
                raise ConfigError(key, "missing required key")
            value = default
        values[key] = value
    return values


@dataclass
class ExperimentConfig:
    values: dict
    source: Path | None = None

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def visible_kind(self) -> LayerKind:
        return LayerKind(self["model.visible"])

    def tds_config(self) -> TdsConfig:
        return TdsConfig(
            m=self["train.batch_size"],
            phi=self["tds.phi"],
            var_beta=self["tds.beta_std"] ** 2,
            steps_per_grad=self["tds.steps"],
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self["train.gamma"],
            lr0=self["train.lr"],
            lr0_adv=self["train.lr_adv"],
            decay=self["train.decay"],
            adam_beta1=self["train.adam_beta1"],
            adam_beta2=self["train.adam_beta2"],
            adam_eps=self["train.adam_eps"],
            epochs_ml=self["train.epochs_ml"],
            epochs_adv=self["train.epochs_adv"],
            batch_size=self["train.batch_size"],
            critic_k=self["critic.k"],
            critic_epsilon=self["critic.epsilon"],
            critic_weighted=self["critic.weighted"],
            learn_scale=self["model.learn_scale"],
            monitor_batch=self["train.monitor_batch"],
        )

    def with_overrides(self, seed=None, out_dir=None, epochs=None) -> "ExperimentConfig":
        values = dict(self.values)
        if seed is not None:
            values["seed"] = int(seed)
        if out_dir is not None:
            values["output.dir"] = str(out_dir)
        if epochs is not None:
            values["train.epochs_ml"], values["train.epochs_adv"] = _split_epochs(
                epochs, values["train.epochs_ml"], values["train.epochs_adv"]
            )
        cfg = ExperimentConfig(values, self.source)
        cfg.check()
        return cfg

    def with_values(self, updates: dict) -> "ExperimentConfig":
        """Copy with individual keys replaced (``{"train.gamma": 1.0}``)."""
        values = dict(self.values)
        for key, value in updates.items():
            if key not in SCHEMA:
                raise ConfigError(key, "unknown key")
            values[key] = value
        cfg = ExperimentConfig(values, self.source)
        cfg.check()
        return cfg

    def output_dir(self) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
        out = self["output.dir"]
        if out is None:
            stem = self.source.stem if self.source is not None else "experiment"
            return root / stem
        out = Path(out)
        return out if out.is_absolute() or OUTPUT_ROOT_ENV not in os.environ else root / out

    def check(self, check_paths: bool = True) -> None:
        """Validate every sub-config; raises :class:`ConfigError` naming the key."""
        source = self["dataset.source"]
        if source == "mog":
            if self["dataset.mog"] not in ds.BUILTIN_MOGS:
                raise ConfigError("dataset.mog", f"expected one of {sorted(ds.BUILTIN_MOGS)}")
            if self["dataset.n_samples"] < 2:
                raise ConfigError("dataset.n_samples", "need at least 2 samples")
        elif source == "mnist":
            path = self["dataset.path"]
            if path is None:
                raise ConfigError("dataset.path", "missing required key for MNIST data")
            if check_paths:
                try:
                    ds.find_mnist_images(path)
                except FileNotFoundError as exc:
                    raise ConfigError("dataset.path", str(exc)) from None
            if self["dataset.variant"] not in ("continuous", "binary"):
                raise ConfigError("dataset.variant", "expected 'continuous' or 'binary'")
        else:
            raise ConfigError("dataset.source", "expected 'mog' or 'mnist'")
        if not 0.0 < self["dataset.validation_fraction"] < 1.0:
            raise ConfigError("dataset.validation_fraction", "must lie strictly between 0 and 1")
        try:
            self.visible_kind
        except ValueError:
            raise ConfigError("model.visible", "expected 'gaussian' or 'bernoulli'") from None
        if self["model.n_hidden"] < 1:
            raise ConfigError("model.n_hidden", "must be >= 1")
        for key, build in (("tds", self.tds_config), ("train", self.train_config)):
            try:
                build()
            except ValueError as exc:
                raise ConfigError(key, str(exc)) from None
        if self["critic.k"] > 2 * self["train.batch_size"]:
            raise ConfigError("critic.k", "exceeds the critic cache size (2 x batch size)")


def _split_epochs(spec, epochs_ml, epochs_adv):
    text = str(spec)
    if "+" in text:
        ml, adv = (int(part) for part in text.split("+", 1))
        return ml, adv
    total = int(text)
    if epochs_ml == 0:
        return 0, total
    if epochs_adv == 0:
        return total, 0
    return total // 2, total - total // 2


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return ExperimentConfig(parse_config_text(text), path)


def bundled_configs() -> list[Path]:
    return sorted(BUNDLED_CONFIG_DIR.glob("*.cfg"))


# -- data --------------------------------------------------------------------

def load_dataset(cfg: ExperimentConfig, rng) -> ds.Dataset:
    """Materialize and split the configured dataset, consuming ``rng``."""
    if cfg["dataset.source"] == "mog":
        spec = ds.BUILTIN_MOGS[cfg["dataset.mog"]]()
        data = ds.mog_sample(spec, cfg["dataset.n_samples"], rng)
    else:
        data = ds.mnist_load(cfg["dataset.path"], cfg["dataset.variant"], cfg["dataset.limit"])
    return ds.split_validation(data, cfg["dataset.validation_fraction"], rng)


# -- checkpoints -------------------------------------------------------------

def _params_to_json(p) -> dict:
    return {
        "visible_loc": p.visible_loc.tolist(),
        "visible_log_scale": p.visible_log_scale.tolist(),
        "hidden_bias": p.hidden_bias.tolist(),
        "weights": p.weights.tolist(),
    }


def _params_from_json(d, cls=GradientBundle, **extra):
    arrays = {
        k: np.asarray(d[k], dtype=float)
        for k in ("visible_loc", "visible_log_scale", "hidden_bias", "weights")
    }
    if arrays["weights"].ndim != 2:
        arrays["weights"] = arrays["weights"].reshape(len(arrays["visible_loc"]), -1)
    return cls(**arrays, **extra)


def model_to_json(model: RbmModel) -> dict:
    return {
        "visible_kind": model.visible_kind.value,
        "n_visible": model.n_visible,
        "n_hidden": model.n_hidden,
        **_params_to_json(model),
    }


def model_from_json(d) -> RbmModel:
    model = _params_from_json(d, RbmModel, visible_kind=LayerKind(d["visible_kind"]))
    if (model.n_visible, model.n_hidden) != (d["n_visible"], d["n_hidden"]):
        raise CheckpointError("layer sizes disagree with the stored arrays")
    return model


def _matrix(a, cols):
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, cols)


def state_to_json(state: TrainingState, tds: TdsConfig | None = None) -> dict:
    pop, cache = state.population, state.cache
    out = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "model": model_to_json(state.model),
        "adam": {
            "step": state.adam.step,
            "m": _params_to_json(state.adam.m),
            "v": _params_to_json(state.adam.v),
        },
        "population": {"v": pop.v.tolist(), "h": pop.h.tolist(), "beta": pop.beta.tolist()},
        "critic": {
            "k": cache.k,
            "epsilon": cache.epsilon,
            "data_points": cache.data_points.tolist(),
            "model_points": cache.model_points.tolist(),
        },
        "rng": state.rng.bit_generator.state,
    }
    if tds is not None:
        out["tds"] = {"phi": tds.phi, "var_beta": tds.var_beta, "steps_per_grad": tds.steps_per_grad}
    return out


def state_from_json(d) -> TrainingState:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError("not a beam checkpoint")
    if d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {d.get('version')} is not supported (expected {CHECKPOINT_VERSION})"
        )
    model = model_from_json(d["model"])
    nv, nh = model.n_visible, model.n_hidden
    adam = AdamState(
        _params_from_json(d["adam"]["m"]), _params_from_json(d["adam"]["v"]), d["adam"]["step"]
    )
    p = d["population"]
    pop = ParticlePopulation(_matrix(p["v"], nv), _matrix(p["h"], nh), np.asarray(p["beta"], float))
    c = d["critic"]
    cache = CriticCache(c["k"], c["epsilon"])
    if len(c["data_points"]) and len(c["model_points"]):
        cache = cache.update(_matrix(c["data_points"], nh), _matrix(c["model_points"], nh))
    bitgen_cls = getattr(np.random, d["rng"]["bit_generator"])
    bitgen = bitgen_cls()
    bitgen.state = d["rng"]
    return TrainingState(model, adam, pop, cache, np.random.Generator(bitgen), d["epoch"])


def save_checkpoint(path, state: TrainingState, tds: TdsConfig | None = None) -> None:
    body = ",\n".join(
        f" {json.dumps(key)}: {json.dumps(value)}" for key, value in state_to_json(state, tds).items()
    )
    Path(path).write_text("{\n" + body + "\n}\n", encoding="utf-8")


def load_checkpoint(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None


# -- CSV ---------------------------------------------------------------------

def _fmt(x) -> str:
    return repr(float(x))


def metrics_row(record: EpochRecord) -> list[str]:
    r = record.report
    return [str(record.epoch), record.phase, _fmt(r.forward_kl), _fmt(r.reverse_kl),
            _fmt(record.mean_beta), _fmt(record.learning_rate)]


def read_metrics(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def _write_csv(path, header, rows, preamble=None) -> None:
    buf = io.StringIO()
    if preamble:
        buf.write(preamble + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def fantasy_visibles(model: RbmModel, pop: ParticlePopulation) -> np.ndarray:
    """Visible rows for sample dumps: the conditional mean given the final
    hidden state for Gaussian visibles, the sampled state otherwise."""
    if model.gaussian:
        return visible_conditional(model, pop.h, 1.0)[0]
    return pop.v


def write_samples(path, model: RbmModel, pop: ParticlePopulation) -> None:
    rows = fantasy_visibles(model, pop)
    _write_csv(path, [f"v{i}" for i in range(rows.shape[1])],
               [[_fmt(x) for x in row] for row in rows])


# -- commands ----------------------------------------------------------------

@dataclass
class RunResult:
    out_dir: Path
    records: list
    state: TrainingState


def _run_from_state(cfg: ExperimentConfig, data: ds.Dataset, state: TrainingState,
                    previous_rows: list) -> RunResult:
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    tcfg, tds = cfg.train_config(), cfg.tds_config()
    rows = list(previous_rows)
    records = []
    every = cfg["output.checkpoint_every"]

    def on_epoch(st: TrainingState, rec: EpochRecord):
        rows.append(metrics_row(rec))
        _write_csv(out / "metrics.csv", METRICS_HEADER, rows, METRICS_SCHEMA)
        write_samples(out / f"samples_epoch{rec.epoch:03d}.csv", st.model, st.population)
        boundary = rec.epoch == tcfg.epochs_ml and 0 < tcfg.epochs_ml < tcfg.total_epochs
        final = rec.epoch == tcfg.total_epochs
        if boundary or final or (every and rec.epoch % every == 0):
            save_checkpoint(out / f"checkpoint_epoch{rec.epoch:03d}.json", st, tds)
        records.append(rec)

    for _ in train(state, data.train, data.validation, tcfg, tds, on_epoch):
        pass
    return RunResult(out, records, state)


def run(cfg: ExperimentConfig) -> RunResult:
    cfg.check()
    rng = np.random.default_rng(cfg.seed)
    data = load_dataset(cfg, rng)
    tcfg, tds = cfg.train_config(), cfg.tds_config()
    model = init_model(data.train, cfg["model.n_hidden"], cfg.visible_kind, rng, cfg["model.weight_std"])
    state = new_state(model, tds, tcfg, rng)
    if state.model.n_visible != data.dim:
        raise ConfigError("model", "visible size does not match the data")
    log.info("run: %d train rows, %d validation rows -> %s",
             len(data.train_idx), len(data.val_idx), cfg.output_dir())
    return _run_from_state(cfg, data, state, [])


def resume(checkpoint_path, cfg: ExperimentConfig) -> RunResult:
    """Continue a run from a checkpoint. The dataset is rebuilt from the
    config seed so the train/validation split matches the original run."""
    cfg.check()
    state = state_from_json(load_checkpoint(checkpoint_path))
    data = load_dataset(cfg, np.random.default_rng(cfg.seed))
    if state.model.n_visible != data.dim:
        raise CheckpointError("checkpoint model does not match the dataset dimension")
    metrics = cfg.output_dir() / "metrics.csv"
    previous = []
    if metrics.exists():
        previous = [
            [r[h] for h in METRICS_HEADER]
            for r in read_metrics(metrics)
            if int(r["epoch"]) <= state.epoch
        ]
    return _run_from_state(cfg, data, state, previous)


def validate(cfg_path) -> ExperimentConfig:
    cfg = load_config(cfg_path)
    cfg.check()
    return cfg


def resolve_eval_data(spec: str, seed: int) -> np.ndarray:
    """Evaluation rows from a config file, a built-in mixture name, or a CSV."""
    rng = np.random.default_rng(seed)
    if spec in ds.BUILTIN_MOGS:
        return ds.mog_sample(ds.BUILTIN_MOGS[spec](), 1000, rng).rows
    path = Path(spec)
    if path.suffix == ".cfg":
        cfg = load_config(path)
        cfg.check()
        return load_dataset(cfg, np.random.default_rng(cfg.seed)).validation
    if path.suffix == ".csv":
        return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    raise ConfigError("dataset", f"{spec!r} is not a config, built-in mixture or CSV file")


def evaluate(checkpoint_path, dataset_spec: str, seed: int = 0, steps: int = 1000,
             out_dir=None) -> DivergenceReport:
    """Divergences and a sample dump for a frozen model.

    Fresh particles (one per evaluation row, at most 1000) are driven for
    ``steps`` sweeps with the checkpoint's sampler settings.
    """
    d = load_checkpoint(checkpoint_path)
    if d.get("format") != CHECKPOINT_FORMAT or d.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint {checkpoint_path}")
    model = model_from_json(d["model"])
    rows = resolve_eval_data(dataset_spec, seed)
    if rows.shape[1] != model.n_visible:
        raise CheckpointError("dataset dimension does not match the model")
    t = d.get("tds", {"phi": 0.9, "var_beta": 0.0, "steps_per_grad": 1})
    m = min(len(rows), 1000)
    tds = TdsConfig(m=m, phi=t["phi"], var_beta=t["var_beta"], steps_per_grad=1)
    rng = np.random.default_rng(seed)
    pop = advance(model, init_population(model, tds, rng), steps, tds, rng)
    report = monitor(rows, pop.v, m, epoch=d.get("epoch", 0))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_samples(out / "eval_samples.csv", model, pop)
        _write_csv(out / "eval_metrics.csv", ["epoch", "forward_kl", "reverse_kl"],
                   [[str(report.epoch), _fmt(report.forward_kl), _fmt(report.reverse_kl)]])
    return report


def zero_model_checkpoint(path, n_visible: int, n_hidden: int, kind="gaussian") -> None:
    """Write a checkpoint of an untrained all-zero model (useful as a baseline)."""
    model = RbmModel.zeros(n_visible, n_hidden, kind)
    rng = np.random.default_rng(0)
    tds = TdsConfig(m=1, var_beta=0.0)
    state = TrainingState(model, AdamState.zeros_like(model), init_population(model, tds, rng),
                          CriticCache(1), rng)
    save_checkpoint(path, state, tds)

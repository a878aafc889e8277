"""Compound maximum-likelihood + adversarial training of an RBM.

The objective minimized is ``C = -gamma * L - (1 - gamma) * A`` where ``L``
is the data log-likelihood and ``A`` the model expectation of a critic on
hidden activations. Model averages come from one persistent population of
temperature-driven fantasy particles, reused for both gradient terms and
then pushed into the critic cache for the next minibatch.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterator

import numpy as np

from . import critic as critic_mod
from .critic import CriticCache
from .datasets import minibatches
from .divergences import DivergenceReport, monitor
from .rbm import GradientBundle, LayerKind, RbmModel, hidden_mean_activation
from .tds import ParticlePopulation, TdsConfig, advance, init_population

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    """Raised when parameters or gradients stop being finite."""


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.5
    lr0: float = 0.1
    lr0_adv: float | None = None
    decay: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs_ml: int = 0
    epochs_adv: int = 10
    batch_size: int = 100
    critic_k: int = 5
    critic_epsilon: float = critic_mod.DEFAULT_EPSILON
    critic_weighted: bool = True
    learn_scale: bool = True
    monitor_batch: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not self.lr0 > 0 or (self.lr0_adv is not None and not self.lr0_adv > 0):
            raise ValueError("learning rates must be positive")
        if self.decay < 0:
            raise ValueError("decay must be non-negative")
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epochs_ml < 0 or self.epochs_adv < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def total_epochs(self) -> int:
        return self.epochs_ml + self.epochs_adv

    def phase(self, epoch: int) -> str:
        """Phase of the 0-based ``epoch``."""
        return "ml" if epoch < self.epochs_ml else "adv"

    def gamma_at(self, epoch: int) -> float:
        return 1.0 if self.phase(epoch) == "ml" else self.gamma

    def lr_at(self, epoch: int) -> float:
        if self.phase(epoch) == "ml":
            return lr_schedule(self.lr0, self.decay, epoch)
        lr0 = self.lr0 if self.lr0_adv is None else self.lr0_adv
        return lr_schedule(lr0, self.decay, epoch - self.epochs_ml)


# -- gradients ---------------------------------------------------------------

def weighted_neg_energy_grad(model: RbmModel, v, h, weights) -> GradientBundle:
    """``sum_n weights[n] * neg_energy_grad(model, v[n], h[n])`` without
    materializing per-sample weight matrices."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    h = np.atleast_2d(np.asarray(h, dtype=float))
    w = np.asarray(weights, dtype=float)
    var = model.variance
    vs = v / var
    d_weights = (vs * w[:, None]).T @ h
    d_hidden = w @ h
    if model.gaussian:
        centered = v - model.visible_loc
        d_loc = w @ centered / var
        wh = h @ model.weights.T
        d_log_scale = w @ (centered**2 / var - 2.0 * vs * wh)
    else:
        d_loc = w @ v
        d_log_scale = np.zeros(model.n_visible)
    return GradientBundle(d_loc, d_log_scale, d_hidden, d_weights)


def _batch_weights(n, weights):
    if weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(weights, dtype=float)
    if w.shape != (n,):
        raise ValueError("weights are not aligned with the batch")
    return w / w.sum()


def ml_gradient(model: RbmModel, data_v, fantasy_v, fantasy_h, data_h=None,
                fantasy_weights=None) -> GradientBundle:
    """Log-likelihood gradient: data average minus fantasy average of ``-dE``.

    Data-side hidden statistics default to the mean activations ``p(h=1|v)``.
    ``fantasy_weights`` turns the fantasy average into a weighted one (an
    exact expectation when the batch enumerates the state space).
    """
    data_v = np.atleast_2d(data_v)
    fantasy_v = np.atleast_2d(fantasy_v)
    if len(data_v) == 0 or len(fantasy_v) == 0:
        raise ValueError("ml_gradient needs non-empty data and fantasy batches")
    if data_h is None:
        data_h = hidden_mean_activation(model, data_v)
    pos = weighted_neg_energy_grad(model, data_v, data_h, _batch_weights(len(data_v), None))
    neg = weighted_neg_energy_grad(
        model, fantasy_v, fantasy_h, _batch_weights(len(fantasy_v), fantasy_weights)
    )
    return pos - neg


def adversarial_gradient(model: RbmModel, fantasy_v, fantasy_h, critic_values,
                         fantasy_weights=None) -> GradientBundle:
    """Gradient of the critic expectation: covariance between critic values
    and ``-dE`` over the fantasy batch, with 1/m normalization."""
    t = np.asarray(critic_values, dtype=float)
    m = len(t)
    if m < 2:
        raise ValueError("adversarial_gradient needs at least two particles")
    if len(np.atleast_2d(fantasy_v)) != m:
        raise ValueError("critic values are not aligned with the particles")
    w = _batch_weights(m, fantasy_weights)
    return weighted_neg_energy_grad(model, fantasy_v, fantasy_h, w * (t - w @ t))


def compound_gradient(ml: GradientBundle, adv: GradientBundle, gamma: float) -> GradientBundle:
    """Gradient of ``C = -gamma L - (1 - gamma) A``; feed it to a minimizer."""
    return -(gamma * ml) - ((1.0 - gamma) * adv)


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: GradientBundle
    v: GradientBundle
    step: int = 0

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(model: RbmModel, grad: GradientBundle, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam descent step. Returns ``(model, state)``."""
    if not grad.all_finite():
        raise TrainingDiverged("non-finite gradient")
    t = state.step + 1
    m = state.m * beta1 + grad * (1.0 - beta1)
    v = state.v * beta2 + grad._map(np.square) * (1.0 - beta2)
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    update = m._map(lambda a, b: (a / c1) / (np.sqrt(b / c2) + eps), v)
    return model.with_params(model - update * lr), AdamState(m, v, t)


def lr_schedule(lr0: float, decay: float, epoch: int) -> float:
    """Power-law decay ``lr0 / (1 + decay * epoch)``."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 / (1.0 + decay * epoch)


# -- initialization ----------------------------------------------------------

def init_model(data, n_hidden: int, visible_kind, rng, weight_std: float = 0.01) -> RbmModel:
    """Small random weights, visible layer matched to the data marginals."""
    data = np.asarray(data, dtype=float)
    kind = LayerKind(visible_kind)
    mean = data.mean(axis=0)
    if kind is LayerKind.GAUSSIAN:
        loc = mean
        log_scale = np.log(np.maximum(data.std(axis=0), 1e-2))
    else:
        p = np.clip(mean, 1e-3, 1 - 1e-3)
        loc = np.log(p / (1 - p))
        log_scale = np.zeros(data.shape[1])
    return RbmModel(
        loc,
        log_scale,
        np.zeros(n_hidden),
        rng.normal(0.0, weight_std, (data.shape[1], n_hidden)),
        kind,
    )


# -- sampling a trained model -----------------------------------------------

def draw_fantasies(model: RbmModel, n: int, tds: TdsConfig, rng, burn_in: int = 500,
                   settle: int = 20) -> ParticlePopulation:
    """``n`` fresh particles driven for ``burn_in`` sweeps with ``tds``, then
    ``settle`` plain Gibbs sweeps at unit temperature."""
    tds = replace(tds, m=n)
    pop = advance(model, init_population(model, tds, rng), burn_in, tds, rng)
    return advance(model, pop, settle, replace(tds, var_beta=0.0), rng)


# -- training loop -----------------------------------------------------------

@dataclass
class TrainingState:
    """Everything needed to continue training bit-identically."""

    model: RbmModel
    adam: AdamState
    population: ParticlePopulation
    cache: CriticCache
    rng: np.random.Generator
    epoch: int = 0


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    phase: str
    report: DivergenceReport
    mean_beta: float
    learning_rate: float


def new_state(model: RbmModel, tds: TdsConfig, cfg: TrainConfig, rng) -> TrainingState:
    return TrainingState(
        model=model,
        adam=AdamState.zeros_like(model),
        population=init_population(model, tds, rng),
        cache=CriticCache(cfg.critic_k, cfg.critic_epsilon),
        rng=rng,
    )


def train_minibatch(state: TrainingState, data_v, cfg: TrainConfig, tds: TdsConfig,
                    gamma: float, lr: float) -> None:
    """One gradient update; mutates ``state``."""
    model = state.model
    pop = advance(model, state.population, tds.steps_per_grad, tds, state.rng)
    data_h = hidden_mean_activation(model, data_v)
    fantasy_features = hidden_mean_activation(model, pop.v)
    ml = ml_gradient(model, data_v, pop.v, pop.h, data_h)
    if gamma < 1.0 and state.cache.ready:
        t = critic_mod.critic_values(state.cache, fantasy_features, cfg.critic_weighted)
        adv = adversarial_gradient(model, pop.v, pop.h, t)
    else:
        adv = ml.zeros_like()
    grad = compound_gradient(ml, adv, gamma)
    if not cfg.learn_scale:
        grad.visible_log_scale = np.zeros_like(grad.visible_log_scale)
    state.cache = critic_mod.update_cache(state.cache, data_h, fantasy_features)
    state.model, state.adam = adam_step(
        model, grad, state.adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    )
    state.population = pop
    if not state.model.all_finite():
        raise TrainingDiverged("non-finite parameters after update")


def train(state: TrainingState, train_rows, validation_rows, cfg: TrainConfig, tds: TdsConfig,
          on_epoch: Callable[[TrainingState, EpochRecord], None] | None = None,
          until: int | None = None) -> Iterator[EpochRecord]:
    """Run epochs ``state.epoch .. until`` (default: all), yielding one record
    per epoch. Adam moments are reset when the adversarial phase begins."""
    until = cfg.total_epochs if until is None else until
    monitor_batch = cfg.monitor_batch or cfg.batch_size
    while state.epoch < until:
        e = state.epoch
        if e == cfg.epochs_ml and e > 0:
            state.adam = AdamState.zeros_like(state.model)
        gamma, lr = cfg.gamma_at(e), cfg.lr_at(e)
        for batch in minibatches(train_rows, cfg.batch_size, state.rng):
            train_minibatch(state, batch, cfg, tds, gamma, lr)
        state.epoch = e + 1
        report = monitor(validation_rows, state.population.v, monitor_batch, epoch=state.epoch)
        record = EpochRecord(state.epoch, cfg.phase(e), report,
                             float(np.mean(state.population.beta)), lr)
        log.info("epoch %d (%s): fwd %.4f rev %.4f", record.epoch, record.phase,
                 report.forward_kl, report.reverse_kl)
        if not (np.isfinite(report.forward_kl) and np.isfinite(report.reverse_kl)):
            raise TrainingDiverged("non-finite divergence estimate")
        if on_epoch is not None:
            on_epoch(state, record)
        yield record


def fit(model: RbmModel, train_rows, validation_rows, cfg: TrainConfig, tds: TdsConfig, rng):
    """Convenience wrapper: train from scratch, return ``(state, records)``."""
    tds = replace(tds, m=cfg.batch_size) if tds.m != cfg.batch_size else tds
    state = new_state(model, tds, cfg, rng)
    records = list(train(state, train_rows, validation_rows, cfg, tds))
    return state, records

"""Temperature-driven sampling of persistent fantasy particles.

Each particle carries its own inverse temperature, evolved by an
autoregressive Gamma process with stationary mean 1, so the population
samples a fattened version of the model distribution while mixing faster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rbm import RbmModel, gibbs_step


@dataclass(frozen=True)
class TdsConfig:
    m: int = 100
    phi: float = 0.9
    var_beta: float = 0.81
    steps_per_grad: int = 1

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("particle count m must be >= 1")
        if not 0.0 <= self.phi < 1.0:
            raise ValueError("phi must lie in [0, 1)")
        if not 0.0 <= self.var_beta < 1.0:
            raise ValueError("var_beta must lie in [0, 1)")
        if self.steps_per_grad < 1:
            raise ValueError("steps_per_grad must be >= 1")


@dataclass
class ParticlePopulation:
    """Persistent particles: row ``i`` of ``v``/``h`` is particle ``i`` at
    inverse temperature ``beta[i]``."""

    v: np.ndarray
    h: np.ndarray
    beta: np.ndarray

    def __len__(self):
        return len(self.beta)

    def copy(self):
        return ParticlePopulation(self.v.copy(), self.h.copy(), self.beta.copy())


def gamma_step(beta, phi: float, var_beta: float, rng):
    """Draw the next inverse temperature(s) given the current value(s).

    ``beta`` may be a scalar or an array; every element is updated
    independently. The conditional mean is ``(1 - phi) + phi * beta``.
    """
    beta = np.asarray(beta, dtype=float)
    if not np.all(np.isfinite(beta)) or np.any(beta <= 0):
        raise ValueError("beta must be finite and positive")
    if var_beta <= 0:
        raise ValueError("gamma_step needs var_beta > 0; pin beta = 1 instead")
    shape = 1.0 / var_beta
    scale = (1.0 - phi) * var_beta
    z = rng.poisson(beta * phi / scale)
    out = rng.gamma(shape + z, scale)
    # shape >= 1/var_beta > 1, so an exact zero is a float underflow
    out = np.maximum(out, np.finfo(float).tiny)
    return float(out) if out.ndim == 0 else out


def stationary_betas(var_beta: float, size: int, rng) -> np.ndarray:
    if var_beta == 0:
        return np.ones(size)
    return rng.gamma(1.0 / var_beta, var_beta, size)


def random_states(model: RbmModel, m: int, rng):
    if model.gaussian:
        v = model.visible_loc + rng.standard_normal((m, model.n_visible))
    else:
        v = (rng.random((m, model.n_visible)) < 0.5).astype(float)
    h = (rng.random((m, model.n_hidden)) < 0.5).astype(float)
    return v, h


def init_population(model: RbmModel, cfg: TdsConfig, rng, m: int | None = None) -> ParticlePopulation:
    m = cfg.m if m is None else m
    if m < 1:
        raise ValueError("population must hold at least one particle")
    v, h = random_states(model, m, rng)
    return ParticlePopulation(v, h, stationary_betas(cfg.var_beta, m, rng))


def advance(model: RbmModel, pop: ParticlePopulation, k: int, cfg: TdsConfig, rng) -> ParticlePopulation:
    """Run ``k`` rounds of (temperature update, Gibbs sweep) on every particle.

    With ``cfg.var_beta == 0`` the temperatures stay pinned at 1 and no
    random numbers are spent on them, so the result is plain persistent Gibbs.
    """
    v, h, beta = pop.v, pop.h, pop.beta
    for _ in range(k):
        if cfg.var_beta > 0:
            beta = gamma_step(beta, cfg.phi, cfg.var_beta, rng)
        v, h = gibbs_step(model, v, beta, rng)
    return ParticlePopulation(v, h, np.array(beta, dtype=float))

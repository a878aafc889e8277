"""Restricted Boltzmann machine with Bernoulli or Gaussian visible units.

The hidden layer is always Bernoulli. Energy of a joint state::

    E(v, h) = -sum_i a_i(v_i) - sum_mu b_mu h_mu - sum_{i,mu} W_{i,mu} (v_i / s_i^2) h_mu

with ``a_i(v) = loc_i * v`` for Bernoulli visibles (``s_i == 1``) and
``a_i(v) = -(v - loc_i)^2 / (2 s_i^2)`` for Gaussian visibles.

Every function accepts a single state (1-D arrays) or a batch (2-D arrays,
one row per sample) and returns the matching shape.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, fields

import numpy as np
from scipy.special import expit, logsumexp

MAX_ENUMERABLE_UNITS = 20


class LayerKind(str, enum.Enum):
    BERNOULLI = "bernoulli"
    GAUSSIAN = "gaussian"


@dataclass(eq=False)
class Params:
    """Arrays shaped like the learnable parameters of an RBM.

    Serves both as the parameter container of :class:`RbmModel` and as the
    gradient accumulator (``GradientBundle``) returned by derivative code.
    """

    visible_loc: np.ndarray
    visible_log_scale: np.ndarray
    hidden_bias: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        for f in fields(Params):
            setattr(self, f.name, np.asarray(getattr(self, f.name), dtype=float))

    def arrays(self):
        return [getattr(self, f.name) for f in fields(Params)]

    def _map(self, fn, other=None):
        if other is None:
            vals = [fn(a) for a in self.arrays()]
        elif isinstance(other, Params):
            vals = [fn(a, b) for a, b in zip(self.arrays(), other.arrays())]
        else:
            vals = [fn(a, other) for a in self.arrays()]
        return GradientBundle(*vals)

    def __add__(self, other):
        return self._map(np.add, other)

    def __sub__(self, other):
        return self._map(np.subtract, other)

    def __mul__(self, scalar):
        return self._map(np.multiply, scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self._map(np.negative)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def zeros_like(self) -> "GradientBundle":
        return self._map(np.zeros_like)

    def allclose(self, other, **kw) -> bool:
        return all(np.allclose(a, b, **kw) for a, b in zip(self.arrays(), other.arrays()))


class GradientBundle(Params):
    """Parameter-shaped accumulator for derivatives."""


@dataclass(eq=False)
class RbmModel(Params):
    visible_kind: LayerKind = LayerKind.BERNOULLI

    def __post_init__(self):
        super().__post_init__()
        self.visible_kind = LayerKind(self.visible_kind)
        nv, nh = self.weights.shape
        if self.visible_loc.shape != (nv,) or self.visible_log_scale.shape != (nv,):
            raise ValueError("visible parameter shapes do not match weights")
        if self.hidden_bias.shape != (nh,):
            raise ValueError("hidden_bias shape does not match weights")

    @property
    def n_visible(self) -> int:
        return self.weights.shape[0]

    @property
    def n_hidden(self) -> int:
        return self.weights.shape[1]

    @property
    def gaussian(self) -> bool:
        return self.visible_kind is LayerKind.GAUSSIAN

    @property
    def variance(self) -> np.ndarray:
        # binary units carry no scale parameter
        if not self.gaussian:
            return np.ones(self.n_visible)
        return np.exp(2.0 * self.visible_log_scale)

    @classmethod
    def zeros(cls, n_visible: int, n_hidden: int, visible_kind=LayerKind.BERNOULLI):
        return cls(
            visible_loc=np.zeros(n_visible),
            visible_log_scale=np.zeros(n_visible),
            hidden_bias=np.zeros(n_hidden),
            weights=np.zeros((n_visible, n_hidden)),
            visible_kind=visible_kind,
        )

    @classmethod
    def random(cls, n_visible, n_hidden, rng, visible_kind=LayerKind.BERNOULLI, scale=0.5):
        kind = LayerKind(visible_kind)
        log_scale = (
            rng.normal(0.0, 0.2, n_visible) if kind is LayerKind.GAUSSIAN else np.zeros(n_visible)
        )
        return cls(
            visible_loc=rng.normal(0.0, scale, n_visible),
            visible_log_scale=log_scale,
            hidden_bias=rng.normal(0.0, scale, n_hidden),
            weights=rng.normal(0.0, scale, (n_visible, n_hidden)),
            visible_kind=kind,
        )

    def with_params(self, p: Params) -> "RbmModel":
        """Copy of this model carrying the arrays of ``p``."""
        log_scale = p.visible_log_scale if self.gaussian else np.zeros(self.n_visible)
        return RbmModel(
            np.array(p.visible_loc, dtype=float),
            np.array(log_scale, dtype=float),
            np.array(p.hidden_bias, dtype=float),
            np.array(p.weights, dtype=float),
            self.visible_kind,
        )

    def copy(self) -> "RbmModel":
        return self.with_params(self)

    def scaled(self, factor: float) -> "RbmModel":
        """Model whose energy is ``factor`` times this model's energy.

        Only defined for Bernoulli visibles, where every term is linear in the
        parameters.
        """
        if self.gaussian:
            raise ValueError("energy scaling is only linear for Bernoulli visibles")
        return RbmModel(
            factor * self.visible_loc,
            self.visible_log_scale.copy(),
            factor * self.hidden_bias,
            factor * self.weights,
            self.visible_kind,
        )


def _check_v(model: RbmModel, v):
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != model.n_visible:
        raise ValueError(f"visible dimension {v.shape[-1]} != {model.n_visible}")
    return v


def _check_h(model: RbmModel, h):
    h = np.asarray(h, dtype=float)
    if h.shape[-1] != model.n_hidden:
        raise ValueError(f"hidden dimension {h.shape[-1]} != {model.n_hidden}")
    return h


def _visible_term(model: RbmModel, v):
    """sum_i a_i(v_i)"""
    if model.gaussian:
        return -np.sum((v - model.visible_loc) ** 2 / (2.0 * model.variance), axis=-1)
    return v @ model.visible_loc


def energy(model: RbmModel, v, h):
    v = _check_v(model, v)
    h = _check_h(model, h)
    coupling = np.sum(((v / model.variance) @ model.weights) * h, axis=-1)
    return -_visible_term(model, v) - h @ model.hidden_bias - coupling


def hidden_field(model: RbmModel, v):
    v = _check_v(model, v)
    return model.hidden_bias + (v / model.variance) @ model.weights


def hidden_conditional(model: RbmModel, v, beta=1.0):
    """Per-unit means p(h_mu = 1 | v) at inverse temperature ``beta``.

    ``beta`` may be a scalar or one value per row of ``v``.
    """
    beta = np.asarray(beta, dtype=float)
    return expit(_col(beta) * hidden_field(model, v))


def hidden_mean_activation(model: RbmModel, v):
    """Critic feature map: mean hidden activations at unit temperature."""
    return hidden_conditional(model, v, 1.0)


def visible_conditional(model: RbmModel, h, beta=1.0):
    """Conditional distribution of the visible layer given ``h``.

    Returns the per-unit mean and, for Gaussian visibles, the per-unit
    variance (``None`` for Bernoulli visibles).
    """
    h = _check_h(model, h)
    beta = _col(np.asarray(beta, dtype=float))
    wh = h @ model.weights.T
    if model.gaussian:
        mean = model.visible_loc + wh
        var = np.broadcast_to(model.variance / beta, mean.shape).copy()
        return mean, var
    return expit(beta * (model.visible_loc + wh / model.variance)), None


def sample_hidden(model: RbmModel, v, beta, rng):
    p = hidden_conditional(model, v, beta)
    return (rng.random(p.shape) < p).astype(float)


def sample_visible(model: RbmModel, h, beta, rng):
    mean, var = visible_conditional(model, h, beta)
    if var is None:
        return (rng.random(mean.shape) < mean).astype(float)
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def gibbs_step(model: RbmModel, v, beta, rng):
    """One block Gibbs sweep: ``h ~ p(h|v)`` then ``v ~ p(v|h)``. Returns ``(v, h)``."""
    h = sample_hidden(model, v, beta, rng)
    return sample_visible(model, h, beta, rng), h


def neg_energy_grad(model: RbmModel, v, h) -> GradientBundle:
    """Derivatives of ``-E(v, h)`` with respect to every parameter.

    For batched inputs each field gains a leading batch axis.
    """
    v = _check_v(model, v)
    h = _check_h(model, h)
    var = model.variance
    vs = v / var
    d_weights = vs[..., :, None] * h[..., None, :]
    if model.gaussian:
        d_loc = (v - model.visible_loc) / var
        wh = h @ model.weights.T
        d_log_scale = (v - model.visible_loc) ** 2 / var - 2.0 * vs * wh
    else:
        d_loc = v.copy()
        d_log_scale = np.zeros_like(v)
    return GradientBundle(d_loc, d_log_scale, h.copy(), d_weights)


def free_energy(model: RbmModel, v, beta=1.0):
    """``-log sum_h exp(-beta E(v, h))``."""
    beta = np.asarray(beta, dtype=float)
    field = _col(beta) * hidden_field(model, v)
    return -beta * _visible_term(model, _check_v(model, v)) - np.sum(np.logaddexp(0.0, field), axis=-1)


def all_binary_states(n: int) -> np.ndarray:
    return np.array(list(itertools.product((0.0, 1.0), repeat=n))).reshape(-1, n)


def exact_log_partition(model: RbmModel, beta: float = 1.0) -> float:
    """log Z(beta) by enumerating the hidden layer and summing or integrating
    the visible layer in closed form."""
    nv, nh = model.n_visible, model.n_hidden
    if nh > MAX_ENUMERABLE_UNITS or (not model.gaussian and nv + nh > MAX_ENUMERABLE_UNITS):
        raise ValueError("model too large for exact enumeration")
    hs = all_binary_states(nh)
    wh = hs @ model.weights.T
    if model.gaussian:
        var = model.variance
        loc = model.visible_loc
        per_unit = (
            0.5 * np.log(2.0 * np.pi * var / beta)
            + beta * ((loc + wh) ** 2 - loc**2) / (2.0 * var)
        )
    else:
        per_unit = np.logaddexp(0.0, beta * (model.visible_loc + wh))
    return float(logsumexp(beta * hs @ model.hidden_bias + per_unit.sum(axis=1)))


def _col(beta: np.ndarray) -> np.ndarray:
    return beta[..., None] if beta.ndim else beta

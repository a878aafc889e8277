"""Divergence estimates used to monitor training.

Sample-based: the 1-nearest-neighbor KL estimator of Wang, Kulkarni and
Verdu (2009). Density-based: midpoint quadrature of the discriminator
divergence and of KL divergences between analytic 1-D densities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import norm

DISTANCE_FLOOR = 1e-12
_KDTREE_MAX_DIM = 16


@dataclass(frozen=True)
class DivergenceReport:
    epoch: int
    forward_kl: float
    reverse_kl: float
    n_minibatches_averaged: int


def _nn_dist(queries, points, skip_self=False):
    """Distance from each query to its nearest point (second nearest when the
    queries are the points themselves)."""
    k = 2 if skip_self else 1
    if queries.shape[1] <= _KDTREE_MAX_DIM:
        d, _ = cKDTree(points).query(queries, k=k)
        return d[:, -1] if k == 2 else d
    # brute force in high dimension; Gram form is accurate enough for a log-ratio
    sq = (
        np.sum(queries**2, axis=1)[:, None]
        + np.sum(points**2, axis=1)[None, :]
        - 2.0 * queries @ points.T
    )
    sq = np.maximum(sq, 0.0)
    if skip_self:
        np.fill_diagonal(sq, np.inf)
    return np.sqrt(sq.min(axis=1))


def knn_kl_estimate(x_samples, y_samples) -> float:
    """Estimate KL(p || q) from samples ``x ~ p`` (n rows) and ``y ~ q`` (m rows)."""
    x = np.asarray(x_samples, dtype=float)
    y = np.asarray(y_samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    m = len(y)
    if n < 2:
        raise ValueError("need at least two samples from p")
    if m < 1:
        raise ValueError("need at least one sample from q")
    if y.shape[1] != d:
        raise ValueError("sample dimensions differ")
    rho = np.maximum(_nn_dist(x, x, skip_self=True), DISTANCE_FLOOR)
    nu = np.maximum(_nn_dist(x, y), DISTANCE_FLOOR)
    return float(d / n * np.sum(np.log(nu / rho)) + np.log(m / (n - 1)))


def monitor(validation, fantasy_visible, minibatch: int, epoch: int = 0) -> DivergenceReport:
    """Average forward and reverse KL estimates over validation minibatches.

    Each validation minibatch of ``minibatch`` rows is compared with the
    full set of fantasy visibles. A validation set smaller than ``minibatch``
    is used as a single batch.
    """
    validation = np.asarray(validation, dtype=float)
    fantasy = np.asarray(fantasy_visible, dtype=float)
    if len(validation) == 0:
        raise ValueError("validation set is empty")
    n_batches = max(1, len(validation) // minibatch)
    size = min(minibatch, len(validation))
    fwd, rev = [], []
    for b in range(n_batches):
        chunk = validation[b * size : (b + 1) * size]
        fwd.append(knn_kl_estimate(chunk, fantasy))
        rev.append(knn_kl_estimate(fantasy, chunk))
    return DivergenceReport(epoch, float(np.mean(fwd)), float(np.mean(rev)), n_batches)


# -- analytic 1-D densities -------------------------------------------------

def midpoint_grid(lo: float, hi: float, n: int = 2**14):
    width = (hi - lo) / n
    return lo + width * (np.arange(n) + 0.5), width


def _check_normalized(values, width, name, tol=1e-6):
    total = float(np.sum(values) * width)
    if abs(total - 1.0) > tol:
        raise ValueError(f"{name} integrates to {total:.9f} on the grid, not 1")


def _xlogy_ratio(a, b):
    """a * log(a / b) with the 0 log 0 = 0 convention."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(a > 0, a * np.log(a / b), 0.0)


def discriminator_divergence_1d(p_density, q_density, grid) -> float:
    """``-int q log(2 p / (p + q))`` by midpoint quadrature; ``q`` is the model.

    ``grid`` is ``(lo, hi, n)``.
    """
    x, width = midpoint_grid(*grid)
    p, q = p_density(x), q_density(x)
    _check_normalized(p, width, "p")
    _check_normalized(q, width, "q")
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(q > 0, -q * np.log(2.0 * p / (p + q)), 0.0)
    return float(np.sum(integrand) * width)


def kl_divergence_1d(p_density, q_density, grid) -> float:
    """``int p log(p / q)`` by midpoint quadrature."""
    x, width = midpoint_grid(*grid)
    p, q = p_density(x), q_density(x)
    _check_normalized(p, width, "p")
    _check_normalized(q, width, "q")
    return float(np.sum(_xlogy_ratio(p, q)) * width)


def discriminator_f(t):
    """Generator function of the discriminator divergence as an f-divergence."""
    t = np.asarray(t, dtype=float)
    return np.log((t + 1.0) / (2.0 * t))


def bimodal_pair(delta: float, std: float = 1.0):
    """Two equal Gaussians at ``+-delta/2`` and the single Gaussian sharing
    their mean and variance. Returns ``(p, q, grid)``."""
    q_std = np.sqrt(std**2 + delta**2 / 4.0)

    def p(x):
        return 0.5 * (norm.pdf(x, -delta / 2, std) + norm.pdf(x, delta / 2, std))

    def q(x):
        return norm.pdf(x, 0.0, q_std)

    half = delta / 2 + 8.0 * max(std, q_std)
    return p, q, (-half, half, 2**14)


def figure2_curves(deltas):
    """Forward KL, reverse KL and discriminator divergence between the
    bimodal data density and its moment-matched Gaussian, per separation."""
    rows = []
    for delta in deltas:
        p, q, grid = bimodal_pair(delta)
        rows.append(
            (
                float(delta),
                kl_divergence_1d(p, q, grid),
                kl_divergence_1d(q, p, grid),
                discriminator_divergence_1d(p, q, grid),
            )
        )
    return np.array(rows)

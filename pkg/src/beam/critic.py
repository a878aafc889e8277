"""Nearest-neighbor critics on hidden-layer activations.

The critic scores a feature vector by the composition of its ``k`` nearest
neighbors in a cache holding the previous minibatch of data-side and
model-side activations. Search is an exact brute-force scan; ties in
distance go to data points first, then to the earlier-inserted point.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

DEFAULT_EPSILON = 1e-3


@dataclass
class CriticCache:
    k: int = 5
    epsilon: float = DEFAULT_EPSILON
    data_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    model_points: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    @property
    def size(self) -> int:
        return len(self.data_points) + len(self.model_points)

    @property
    def ready(self) -> bool:
        return len(self.data_points) > 0 and len(self.model_points) > 0

    def update(self, data_activations, model_activations) -> "CriticCache":
        return update_cache(self, data_activations, model_activations)


def update_cache(cache: CriticCache, data_activations, model_activations) -> CriticCache:
    """Replace both point sets wholesale (earlier points are forgotten)."""
    data = np.atleast_2d(np.asarray(data_activations, dtype=float))
    model = np.atleast_2d(np.asarray(model_activations, dtype=float))
    if data.size == 0 or model.size == 0:
        raise ValueError("critic cache needs non-empty data and model point sets")
    if data.shape[1] != model.shape[1]:
        raise ValueError("data and model activations differ in dimension")
    return CriticCache(cache.k, cache.epsilon, data.copy(), model.copy())


def _neighbors(cache: CriticCache, x, exclude=None):
    """Indices (into data ++ model) and distances of the k nearest points.

    ``exclude`` is an optional per-query index into the concatenated cache
    that is never returned (the query's own slot when it is a cache member).
    """
    if not cache.ready:
        raise ValueError("critic cache is empty")
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    pts = np.vstack([cache.data_points, cache.model_points])
    if x.shape[1] != pts.shape[1]:
        raise ValueError("query dimension does not match cache")
    available = len(pts) - (0 if exclude is None else 1)
    if cache.k > available:
        raise ValueError(f"cache holds {available} usable points, fewer than k={cache.k}")
    exclude = None if exclude is None else np.broadcast_to(np.atleast_1d(exclude), (len(x),))
    if len(pts) <= 2 * cache.k + 2:
        mask = np.ones((len(x), len(pts)), bool)
        if exclude is not None:
            mask[np.arange(len(x)), exclude] = False
    else:
        mask = _shortlist(x, pts, cache.k, exclude)
    cols, d = _exact_distances(x, pts, mask)
    pos = _first_k(d, cache.k)
    return np.take_along_axis(cols, pos, axis=1), np.take_along_axis(d, pos, axis=1), single


def _shortlist(x, pts, k, exclude):
    """Mask of points that can be among the k nearest of each query.

    Squared distances from the Gram form are off by at most ``tol``, so every
    true neighbor (ties at the k-th place included) lies within ``2 tol`` of
    the k-th smallest approximate value.
    """
    xx = np.sum(x**2, axis=1)
    pp = np.sum(pts**2, axis=1)
    approx = xx[:, None] + pp[None, :] - 2.0 * (x @ pts.T)
    # rounding error bound of the Gram form, with a wide safety factor
    tol = 1e-10 * (xx + pp.max())[:, None] + 1e-300
    if exclude is not None:
        approx[np.arange(len(x)), exclude] = np.inf
    kth = np.partition(approx, k - 1, axis=1)[:, k - 1 : k]
    return approx <= kth + 2.0 * tol


def _exact_distances(x, pts, mask):
    """Euclidean distances of the masked (query, point) pairs, packed per row
    in increasing point index. Returns ``(cols, d)``; padding slots hold the
    index ``len(pts)`` and distance inf."""
    rows, c = np.nonzero(mask)
    counts = mask.sum(axis=1)
    width = int(counts.max(initial=0))
    slot = np.arange(len(rows)) - np.repeat(np.cumsum(counts) - counts, counts)
    cols = np.full((len(x), width), len(pts))
    d = np.full((len(x), width), np.inf)
    cols[rows, slot] = c
    step = 1 << 20
    for lo in range(0, len(rows), step):
        r, cc, sl = rows[lo : lo + step], c[lo : lo + step], slot[lo : lo + step]
        diff = x[r] - pts[cc]
        d[r, sl] = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return cols, d


def _first_k(d, k):
    """Column positions of the k smallest entries per row, ordered by
    (distance, position). Positions follow point index, so equal distances
    keep data points before model points."""
    if k >= d.shape[1]:
        return np.argsort(d, axis=1, kind="stable")[:, :k]
    kth = np.partition(d, k - 1, axis=1)[:, k - 1 : k]
    below = d < kth
    at = d == kth
    # points tied at the k-th distance are admitted in index order
    take = below | (at & (np.cumsum(at, axis=1) <= k - below.sum(axis=1, keepdims=True)))
    cand = np.nonzero(take)[1].reshape(len(d), k)
    order = np.lexsort((cand, np.take_along_axis(d, cand, axis=1)), axis=-1)
    return np.take_along_axis(cand, order, axis=1)


def t_nn(cache: CriticCache, x, exclude=None):
    """Nearest-neighbor critic ``2 j / k - 1`` with ``j`` data-side neighbors."""
    idx, _, single = _neighbors(cache, x, exclude)
    j = np.sum(idx < len(cache.data_points), axis=1)
    out = 2.0 * j / cache.k - 1.0
    return float(out[0]) if single else out


def t_dnn(cache: CriticCache, x, exclude=None):
    """Distance-weighted critic with inverse-distance weights ``1/(d + eps)``."""
    idx, dist, single = _neighbors(cache, x, exclude)
    w = 1.0 / (dist + cache.epsilon)
    from_data = idx < len(cache.data_points)
    out = 2.0 * np.sum(w * from_data, axis=1) / np.sum(w, axis=1) - 1.0
    return float(out[0]) if single else out


def critic_values(cache: CriticCache, x, weighted: bool = True):
    return t_dnn(cache, x) if weighted else t_nn(cache, x)


def unit_ball_log_volume(n: int) -> float:
    return 0.5 * n * np.log(np.pi) - gammaln(0.5 * n + 1.0)


def knn_density(points, x, k: int) -> float:
    """k-NN density estimate at ``x``: the fraction ``k / N`` of the sample
    spread uniformly over the ball reaching the k-th nearest point."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if len(points) < k:
        raise ValueError("fewer points than k")
    d = np.sort(np.linalg.norm(points - x, axis=1))[k - 1]
    if d == 0:
        raise ZeroDivisionError("k-th neighbor distance is zero; density is degenerate")
    n = points.shape[1]
    return float(k / (len(points) * np.exp(unit_ball_log_volume(n) + n * np.log(d))))

"""Nearest-neighbour estimators of KL and Jensen-Shannon divergence."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from osskit.errors import DegenerateSampleError, InvalidKError
from osskit.stats.kde import KDEModel, sample_kde
from osskit.stats.seeding import derive_seed

LN2 = math.log(2.0)
DUPLICATE_TOL = 1e-12
JITTER = 1e-10


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float  # nats, after clamping
    k_neighbors: int
    sample_size: int
    clamped: bool
    raw: float  # before clamping


def _kth_distances(tree: cKDTree, points: np.ndarray, k: int) -> np.ndarray:
    dist, _ = tree.query(points, k=[k])
    return dist[:, 0]


def _as_2d(a):
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def knn_kl_raw(x, y, k: int = 1, seed=0) -> float:
    """Unclamped k-NN estimate of KL(P || Q) from samples x ~ P and y ~ Q.

    (d/n) * sum_i log(nu_k(x_i) / rho_k(x_i)) + log(m / (n - 1)).
    """
    x = _as_2d(x)
    y = _as_2d(y)
    n, d = x.shape
    m = y.shape[0]
    if y.shape[1] != d:
        raise ValueError("x and y must have the same dimension")
    if k < 1 or k >= n or k > m:
        raise InvalidKError(f"need 1 <= k < n and k <= m; got k={k}, n={n}, m={m}")

    y_tree = cKDTree(y)
    rho = _kth_distances(cKDTree(x), x, k + 1)  # k+1: the query point itself is at distance 0
    nu = _kth_distances(y_tree, x, k)
    bad = (rho < DUPLICATE_TOL) | (nu < DUPLICATE_TOL)
    if bad.any():
        rng = np.random.default_rng(seed)
        scale = JITTER * max(1.0, float(np.abs(x).max()))
        x = x.copy()
        x[bad] += rng.uniform(-scale, scale, size=(int(bad.sum()), d))
        rho = _kth_distances(cKDTree(x), x, k + 1)
        nu = _kth_distances(y_tree, x, k)
        if np.any(rho <= 0) or np.any(nu <= 0):
            raise DegenerateSampleError("zero nearest-neighbour distance after jitter")
    return float(d * np.mean(np.log(nu / rho)) + math.log(m / (n - 1)))


def knn_kl(x, y, k: int = 1, seed=0) -> DivergenceEstimate:
    raw = knn_kl_raw(x, y, k, seed)
    return DivergenceEstimate(max(raw, 0.0), k, len(x), raw < 0, raw)


def jsd_knn(kde_p: KDEModel, kde_q: KDEModel, n: int = 1000, k: int = 1, seed=0) -> DivergenceEstimate:
    """Jensen-Shannon divergence between two KDEs via k-NN KL against a mixture sample.

    The mixture sample is a fresh draw of n//2 points from ``kde_p`` and the
    rest from ``kde_q``. The two KL halves are combined unclamped, and only
    the JSD is clamped to [0, ln 2].
    """
    if n < 2 * (k + 1):
        raise InvalidKError(f"sample size {n} too small for k={k}")
    xp = sample_kde(kde_p, n, derive_seed(seed, 0))
    xq = sample_kde(kde_q, n, derive_seed(seed, 1))
    half = n // 2
    xm = np.vstack([sample_kde(kde_p, half, derive_seed(seed, 2)), sample_kde(kde_q, n - half, derive_seed(seed, 3))])
    raw = 0.5 * knn_kl_raw(xp, xm, k, derive_seed(seed, 4)) + 0.5 * knn_kl_raw(xq, xm, k, derive_seed(seed, 5))
    value = min(max(raw, 0.0), LN2)
    return DivergenceEstimate(value, k, n, value != raw, raw)

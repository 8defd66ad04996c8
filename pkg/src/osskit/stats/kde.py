"""Gaussian kernel density estimate with Scott's bandwidth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from osskit.errors import InsufficientSamplesError

RIDGE_REL = 1e-9
RIDGE_FLOOR = 1e-12


@dataclass(frozen=True)
class KDEModel:
    samples: np.ndarray  # n x d training points
    bandwidth: float  # Scott factor n**(-1/(d+4))
    covariance: np.ndarray  # kernel covariance, bandwidth**2 * (cov + ridge*I)
    ridge: float

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def dim(self):
        return self.samples.shape[1]

    @property
    def cholesky(self):
        return np.linalg.cholesky(self.covariance)


def scott_factor(n: int, d: int) -> float:
    return float(n) ** (-1.0 / (d + 4))


def fit_kde(samples) -> KDEModel:
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, d = x.shape
    if n < 2:
        raise InsufficientSamplesError(f"KDE needs at least 2 samples, got {n}")
    if d < 1:
        raise ValueError("KDE needs at least one dimension")
    if not np.all(np.isfinite(x)):
        raise ValueError("KDE samples must be finite")
    cov = np.atleast_2d(np.cov(x, rowvar=False))
    ridge = max(RIDGE_REL * float(np.trace(cov)) / d, RIDGE_FLOOR)
    h = scott_factor(n, d)
    kernel = h * h * (cov + ridge * np.eye(d))
    kernel = 0.5 * (kernel + kernel.T)
    x.setflags(write=False)
    return KDEModel(x, h, kernel, ridge)


def sample_kde(model: KDEModel, n: int, seed=None) -> np.ndarray:
    """Draw ``n`` points: a uniformly chosen training point plus kernel noise."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, model.n, size=n)
    noise = rng.standard_normal((n, model.dim)) @ model.cholesky.T
    return model.samples[idx] + noise

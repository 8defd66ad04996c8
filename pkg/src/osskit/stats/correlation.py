"""Pearson and Kendall tau-b correlation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import betainc

from osskit.errors import InsufficientSamplesError, UndefinedCorrelationError


@dataclass(frozen=True)
class CorrelationResult:
    statistic: float
    n: int
    p_value: Optional[float] = None

    def to_dict(self):
        return {"statistic": self.statistic, "p_value": self.p_value, "n": self.n}


def t_two_sided_p(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t via the regularized incomplete beta."""
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return float(min(1.0, max(0.0, betainc(0.5 * dof, 0.5, x))))


def pearson(x, y) -> CorrelationResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("x and y must have the same length")
    n = x.size
    if n < 3:
        raise InsufficientSamplesError(f"Pearson correlation needs n >= 3, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("zero variance input")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = min(1.0, max(-1.0, r))
    if abs(r) == 1.0:
        return CorrelationResult(r, n, 0.0)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationResult(r, n, t_two_sided_p(t, n - 2))


def kendall_counts(a, b):
    """(concordant, discordant, n0, ties_a, ties_b) over all index pairs."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError("inputs must have the same length")
    n = a.size
    iu = np.triu_indices(n, k=1)
    sa = np.sign(a[:, None] - a[None, :])[iu]
    sb = np.sign(b[:, None] - b[None, :])[iu]
    prod = sa * sb
    concordant = int(np.count_nonzero(prod > 0))
    discordant = int(np.count_nonzero(prod < 0))
    return concordant, discordant, n * (n - 1) // 2, int(np.count_nonzero(sa == 0)), int(np.count_nonzero(sb == 0))


def kendall_tau(a, b) -> CorrelationResult:
    """Kendall tau-b with tie correction."""
    n = len(a)
    if n < 2:
        raise InsufficientSamplesError(f"Kendall tau needs n >= 2, got {n}")
    c, d, n0, n1, n2 = kendall_counts(a, b)
    if n1 == n0 or n2 == n0:
        raise UndefinedCorrelationError("all values tied in one input")
    tau = (c - d) / math.sqrt((n0 - n1) * (n0 - n2))
    return CorrelationResult(min(1.0, max(-1.0, tau)), n)

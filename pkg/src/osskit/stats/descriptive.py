import numpy as np


def percentile(values, q: float) -> float:
    """Linear-interpolation percentile at position (n-1)*q/100."""
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("percentile of an empty sequence")
    if not 0 <= q <= 100:
        raise ValueError("q must lie in [0, 100]")
    return float(np.percentile(v, q, method="linear"))


def coefficient_of_variation(w) -> float:
    """Population standard deviation over mean."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size == 0:
        raise ValueError("coefficient of variation of an empty sequence")
    mean = w.mean()
    if mean == 0:
        raise ZeroDivisionError("coefficient of variation undefined for zero mean")
    return float(w.std(ddof=0) / mean)

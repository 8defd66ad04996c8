from osskit.stats.correlation import CorrelationResult, kendall_tau, pearson
from osskit.stats.descriptive import coefficient_of_variation, percentile
from osskit.stats.divergence import LN2, DivergenceEstimate, jsd_knn, knn_kl
from osskit.stats.kde import KDEModel, fit_kde, sample_kde
from osskit.stats.seeding import derive_seed

__all__ = [
    "CorrelationResult",
    "DivergenceEstimate",
    "KDEModel",
    "LN2",
    "coefficient_of_variation",
    "derive_seed",
    "fit_kde",
    "jsd_knn",
    "kendall_tau",
    "knn_kl",
    "pearson",
    "percentile",
    "sample_kde",
]

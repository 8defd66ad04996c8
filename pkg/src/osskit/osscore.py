"""Object-based set similarity (OSS) between labelled detection sets.

For comparison sets P_1..P_k and a reference set Q::

    OSS(P_m || Q) = [ (1/c') * sum_j w_j * (JSD_j + r_j) ]^-1

with a per-class k-NN Jensen-Shannon divergence JSD_j between KDE-equalised
feature distributions, a count ratio r_j = T1(beta_m * n_j(P_m) / n_j(Q))
where T1(x) = 1/2 + x/4, the scale factor
beta_m = max(1, n_det(P_m) / Q1(n_det)), and class weights w_j that switch
from 1 to mean class proportions once their coefficient of variation
exceeds ``c_w``.

Note the count ratio grows with n_j(P_m), so a set with more objects than
the reference scores *lower*, other things equal.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from osskit.errors import ConsistencyError, EmptyOverlapError, InsufficientSamplesError
from osskit.ingest.table import FeatureTable, align_tables
from osskit.stats.descriptive import coefficient_of_variation, percentile
from osskit.stats.divergence import DivergenceEstimate, jsd_knn
from osskit.stats.kde import fit_kde
from osskit.stats.seeding import derive_seed

log = logging.getLogger(__name__)

# Only reachable with the r term removed and every JSD clamped to zero.
MIN_DENOMINATOR = 1e-6
GLOBAL_JSD_KEY = 1 << 30

ABSENT_IN_REFERENCE = "absent_in_reference"
INSUFFICIENT_SAMPLES = "insufficient_samples"
LOW_WEIGHT = "low_weight"
EMPTY_SET = "empty_set"


@dataclass(frozen=True)
class OSSConfig:
    c_w: float = 1.0
    k_neighbors: int = 1
    kde_sample_size: int = 1000
    seed: int = 0
    min_class_crops: int = 5
    disable_r: bool = False
    raw_count_r: bool = False
    disable_jsd: bool = False
    disable_t1: bool = False
    disable_beta: bool = False
    disable_weights: bool = False
    # Debug only: one JSD over all included classes pooled, shared by every class term.
    global_jsd: bool = False

    def __post_init__(self):
        if not self.c_w > 0:
            raise ValueError("c_w must be > 0")
        if self.min_class_crops < 2:
            raise ValueError("min_class_crops must be >= 2")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be >= 1")
        if self.kde_sample_size < 2 * (self.k_neighbors + 1):
            raise ValueError("kde_sample_size too small for k_neighbors")

    def to_dict(self):
        return asdict(self)


@dataclass
class ClassRecord:
    class_id: int
    class_name: str
    n_p: int
    n_q: int
    jsd: Optional[float]
    r: Optional[float]
    w: float
    included: bool
    exclusion_reason: Optional[str] = None

    def to_dict(self):
        return asdict(self)


@dataclass
class OSSResult:
    set_id: str
    oss: float
    beta: float
    weighting_active: bool
    n_det: int
    classes: list[ClassRecord]
    config: OSSConfig = field(default_factory=OSSConfig)

    @property
    def included(self):
        return [c for c in self.classes if c.included]

    def to_dict(self):
        return {
            "set_id": self.set_id,
            "oss": self.oss,
            "beta": self.beta,
            "weighting_active": self.weighting_active,
            "n_det": self.n_det,
            "classes": [c.to_dict() for c in self.classes],
        }

    def csv_row(self):
        return {"set_id": self.set_id, "oss": self.oss, "beta": self.beta, "weighting_active": self.weighting_active}


def t1(x):
    """First-order Taylor polynomial of the logistic sigmoid at 0."""
    return 0.5 + 0.25 * x


def beta(n_det_all: Sequence[float], m: int, disable: bool = False) -> float:
    """Scale factor of set ``m``: max(1, n_det[m] / Q1(n_det))."""
    counts = np.asarray(n_det_all, dtype=np.float64)
    if counts.size == 0:
        raise ValueError("need at least one detection count")
    if disable or counts.size == 1:
        return 1.0
    q1 = percentile(counts, 25)
    if q1 <= 0:
        raise ZeroDivisionError("first quartile of detection counts is zero")
    return max(1.0, float(counts[m]) / q1)


def count_ratio(n_p, n_q, beta_m: float = 1.0, config: OSSConfig = OSSConfig()) -> Optional[float]:
    """Smoothed class-count ratio; None when the term is disabled."""
    if config.disable_r:
        return None
    if config.raw_count_r:
        return float(n_p)
    x = beta_m * n_p / n_q
    return float(x) if config.disable_t1 else float(t1(x))


def class_weights(counts, n_det, c_w: float = 1.0, disable: bool = False):
    """Class weights from a k x c count matrix.

    Returns (w, active, excluded) where ``excluded`` holds the column indices
    that fall below the first quartile of w once weighting is active.
    """
    counts = np.atleast_2d(np.asarray(counts, dtype=np.float64))
    n_det = np.asarray(n_det, dtype=np.float64).reshape(-1)
    c = counts.shape[1]
    ones = np.ones(c)
    if disable or c == 0:
        return ones, False, set()
    if np.any(n_det <= 0):
        raise ValueError("every comparison set needs at least one detection")
    w = (counts / n_det[:, None]).mean(axis=0)
    if w.mean() == 0 or coefficient_of_variation(w) <= c_w:
        return ones, False, set()
    q1 = percentile(w, 25)
    excluded = {j for j in range(c) if w[j] < q1}
    return w, True, excluded


def oss_from_terms(jsd, r, w, min_denominator: float = 0.0) -> float:
    """Inverse of the weighted mean of (jsd + r); pass r=None to omit the count term."""
    jsd = np.asarray(jsd, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if jsd.size == 0:
        raise EmptyOverlapError("no classes to combine")
    terms = jsd if r is None else jsd + np.asarray(r, dtype=np.float64)
    denom = float(np.mean(w * terms))
    if min_denominator > 0:
        denom = max(denom, min_denominator)
    if not (math.isfinite(denom) and denom > 0):
        raise ConsistencyError(f"non-positive or non-finite OSS denominator {denom!r}")
    return 1.0 / denom


def recompute_oss(result: OSSResult) -> float:
    """Recompose the score from the stored per-class records."""
    inc = result.included
    r = None if result.config.disable_r else [c.r for c in inc]
    floor = MIN_DENOMINATOR if result.config.disable_r else 0.0
    return oss_from_terms([c.jsd for c in inc], r, [c.w for c in inc], floor)


def per_class_divergence(table_p: FeatureTable, table_q: FeatureTable, class_j: int, config: OSSConfig = OSSConfig(), kde_q=None) -> DivergenceEstimate:
    """JSD between the class-``class_j`` feature distributions of two tables.

    Raises InsufficientSamplesError when either side has fewer than
    ``config.min_class_crops`` rows of that class.
    """
    rows_p = table_p.class_rows(class_j)
    rows_q = table_q.class_rows(class_j)
    low = min(len(rows_p), len(rows_q))
    if low < config.min_class_crops:
        raise InsufficientSamplesError(f"class {class_j}: {low} rows < min_class_crops={config.min_class_crops}")
    if config.disable_jsd:
        return DivergenceEstimate(0.0, config.k_neighbors, 0, False, 0.0)
    if kde_q is None:
        kde_q = fit_kde(rows_q)
    return jsd_knn(
        fit_kde(rows_p), kde_q, config.kde_sample_size, config.k_neighbors, derive_seed(config.seed, class_j)
    )


def _prepare(tables_p, table_q, aliases=None):
    tables = [table_q, *tables_p]
    catalogs = {tuple(t.class_catalog) for t in tables}
    if len(catalogs) > 1 or aliases:
        tables = align_tables(tables, aliases)
    schemas = {tuple(t.feature_schema) for t in tables}
    if len(schemas) > 1:
        raise ValueError(f"feature schemas differ: {sorted(schemas)}")
    return tables[1:], tables[0]


def _divergences(tables_p, table_q, config, threads=1):
    """JSD estimates keyed by (set index, class id); missing keys mean too few samples."""
    c = len(table_q.class_catalog)
    n_q = table_q.class_counts()
    eligible_q = [j for j in range(c) if n_q[j] >= config.min_class_crops]
    jobs = []
    if config.global_jsd:
        qmask = np.isin(table_q.class_ids, eligible_q)
        kde_q = fit_kde(table_q.values[qmask]) if qmask.sum() >= config.min_class_crops else None
        for m, t in enumerate(tables_p):
            pmask = np.isin(t.class_ids, eligible_q)
            if kde_q is not None and pmask.sum() >= config.min_class_crops:
                jobs.append(((m, None), t.values[pmask], kde_q, GLOBAL_JSD_KEY))
    else:
        kdes_q = {j: fit_kde(table_q.class_rows(j)) for j in eligible_q}
        for m, t in enumerate(tables_p):
            counts = t.class_counts()
            for j in eligible_q:
                if counts[j] >= config.min_class_crops:
                    jobs.append(((m, j), t.class_rows(j), kdes_q[j], j))

    def run(job):
        key, rows_p, kde_q, seed_key = job
        if config.disable_jsd:
            return key, DivergenceEstimate(0.0, config.k_neighbors, 0, False, 0.0)
        est = jsd_knn(fit_kde(rows_p), kde_q, config.kde_sample_size, config.k_neighbors, derive_seed(config.seed, seed_key))
        return key, est

    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    out = dict(results)
    if config.global_jsd:
        out = {(m, j): est for (m, _), est in out.items() for j in range(c) if n_q[j] >= config.min_class_crops}
    return out


def _compose(tables_p, table_q, config, divs, skip_empty=False):
    catalog = table_q.class_catalog
    c = len(catalog)
    n_q = table_q.class_counts()
    counts = np.vstack([t.class_counts() for t in tables_p]) if tables_p else np.zeros((0, c), dtype=np.int64)
    n_det = counts.sum(axis=1)
    valid = n_det > 0
    candidates = [j for j in range(c) if n_q[j] >= 1]

    if valid.any() and candidates:
        w_cand, active, low = class_weights(
            counts[valid][:, candidates], n_det[valid], config.c_w, config.disable_weights
        )
    else:
        w_cand, active, low = np.ones(len(candidates)), False, set()
    weights = np.zeros(c)
    weights[candidates] = w_cand
    low_weight = {candidates[i] for i in low}

    valid_n_det = n_det[valid]
    valid_index = np.cumsum(valid) - 1

    results = []
    for m, t in enumerate(tables_p):
        if not valid[m]:
            if skip_empty:
                results.append(None)
                continue
            raise EmptyOverlapError(f"comparison set {t.set_id!r} has no detections")
        b = beta(valid_n_det, int(valid_index[m]), config.disable_beta)
        records = []
        for j in range(c):
            rec = ClassRecord(j, catalog[j], int(counts[m, j]), int(n_q[j]), None, None, float(weights[j]), False)
            if n_q[j] == 0:
                rec.exclusion_reason = ABSENT_IN_REFERENCE
            elif j in low_weight:
                rec.exclusion_reason = LOW_WEIGHT
            elif (m, j) not in divs:
                rec.exclusion_reason = INSUFFICIENT_SAMPLES
            else:
                rec.jsd = divs[(m, j)].value
                rec.r = count_ratio(counts[m, j], n_q[j], b, config)
                rec.included = True
            records.append(rec)
        inc = [rec for rec in records if rec.included]
        if not inc:
            if skip_empty:
                results.append(None)
                continue
            raise EmptyOverlapError(
                f"no class of set {t.set_id!r} can be compared with the reference; "
                f"comparison classes {list(t.class_catalog)} vs reference classes {list(catalog)}"
            )
        r = None if config.disable_r else [rec.r for rec in inc]
        floor = MIN_DENOMINATOR if config.disable_r else 0.0
        score = oss_from_terms([rec.jsd for rec in inc], r, [rec.w for rec in inc], floor)
        results.append(OSSResult(t.set_id, score, b, bool(active), int(n_det[m]), records, config))
    return results


def oss(
    tables_p: Sequence[FeatureTable],
    table_q: FeatureTable,
    config: OSSConfig = OSSConfig(),
    aliases=None,
    threads: int = 1,
    skip_empty: bool = False,
) -> list[Optional[OSSResult]]:
    """Score every comparison table against the reference table.

    With ``skip_empty`` a set that has no includable class yields None
    instead of raising EmptyOverlapError.
    """
    if not tables_p:
        raise ValueError("need at least one comparison set")
    tables_p, table_q = _prepare(tables_p, table_q, aliases)
    if len(table_q) == 0:
        raise EmptyOverlapError("reference set is empty")
    divs = _divergences(tables_p, table_q, config, threads)
    return _compose(tables_p, table_q, config, divs, skip_empty)


VARIANTS = {
    "all": {},
    "-r": {"disable_r": True},
    "raw-count": {"raw_count_r": True},
    "-JSD": {"disable_jsd": True},
    "-T1": {"disable_t1": True},
    "-beta": {"disable_beta": True},
    "-w": {"disable_weights": True},
}


def variant_config(base: OSSConfig, name: str) -> OSSConfig:
    toggles = {k: False for k in ("disable_r", "raw_count_r", "disable_jsd", "disable_t1", "disable_beta", "disable_weights")}
    toggles.update(VARIANTS[name])
    return replace(base, **toggles)


def oss_variant_suite(
    tables_p: Sequence[FeatureTable],
    table_q: FeatureTable,
    base_config: OSSConfig = OSSConfig(),
    aliases=None,
    threads: int = 1,
) -> dict[str, list[OSSResult]]:
    """OSS under every ablation variant, sharing one set of divergence estimates."""
    tables_p, table_q = _prepare(tables_p, table_q, aliases)
    full = variant_config(base_config, "all")
    divs = _divergences(tables_p, table_q, full, threads)
    zero = {key: DivergenceEstimate(0.0, full.k_neighbors, 0, False, 0.0) for key in divs}
    out = {}
    for name in VARIANTS:
        cfg = variant_config(base_config, name)
        out[name] = _compose(tables_p, table_q, cfg, zero if cfg.disable_jsd else divs)
    return out

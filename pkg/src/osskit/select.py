"""OSS-driven workflows: validation-subset search and AL-method ranking."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Optional, Sequence

import numpy as np

from osskit.errors import EmptyOverlapError
from osskit.ingest.table import FeatureTable
from osskit.osscore import OSSConfig, OSSResult, oss
from osskit.stats.correlation import CorrelationResult, kendall_tau, pearson
from osskit.stats.seeding import derive_seed


@dataclass(frozen=True)
class SubsetSearchConfig:
    z: int = 100
    fraction: float = 0.1
    seed: int = 0
    include_full_set: bool = False

    def __post_init__(self):
        if self.z < 1:
            raise ValueError("z must be >= 1")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")


@dataclass
class SubsetSearchResult:
    best_subset: list[str]
    best_index: int
    oss_z: float
    scores: list[float]  # NaN for candidates without any includable class
    seed: int
    full_set_score: Optional[float] = None
    results: list[Optional[OSSResult]] = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "best_index": self.best_index,
            "oss_z": self.oss_z,
            "seed": self.seed,
            "full_set_score": self.full_set_score,
            "best_subset": list(self.best_subset),
            "scores": [None if math.isnan(s) else s for s in self.scores],
        }


def subset_size(n_images: int, fraction: float) -> int:
    return max(1, int(round(n_images * fraction)))


def candidate_subsets(image_ids: Sequence[str], config: SubsetSearchConfig) -> Iterator[list[str]]:
    """Random equal-sized image subsets, each drawn without replacement.

    Candidates come from one sequential stream, so a smaller ``z`` yields a
    prefix of a larger one.
    """
    ids = sorted(image_ids)
    size = subset_size(len(ids), config.fraction)
    rng = np.random.default_rng(derive_seed(config.seed, 0))
    for _ in range(config.z):
        pick = np.sort(rng.choice(len(ids), size=size, replace=False))
        yield [ids[i] for i in pick]


def subsample_search(
    val_table: FeatureTable,
    alt_table: FeatureTable,
    search_config: SubsetSearchConfig = SubsetSearchConfig(),
    oss_config: OSSConfig = OSSConfig(),
    aliases=None,
    threads: int = 1,
) -> SubsetSearchResult:
    """Pick the validation subset most similar to ``alt_table``.

    All candidates (and the full set when requested) are scored in a single
    OSS call so the scale factor sees every candidate. Ties go to the lowest
    candidate index.
    """
    images = val_table.distinct_images()
    if len(images) < math.ceil(1 / search_config.fraction):
        raise ValueError(f"validation set has {len(images)} images, too few for fraction {search_config.fraction}")
    if len(alt_table) == 0:
        raise ValueError("alternative set is empty")
    subsets = list(candidate_subsets(images, search_config))
    tables = [val_table.select_images(s, set_id=f"subset_{i:04d}") for i, s in enumerate(subsets)]
    if search_config.include_full_set:
        tables.append(val_table.take(np.arange(len(val_table)), set_id="full_set"))
        subsets.append(images)
    results = oss(tables, alt_table, oss_config, aliases=aliases, threads=threads, skip_empty=True)
    scores = [math.nan if r is None else r.oss for r in results]
    if all(math.isnan(s) for s in scores):
        raise EmptyOverlapError("every candidate subset lacks an includable class")
    best = max(range(len(scores)), key=lambda i: (-math.inf if math.isnan(scores[i]) else scores[i], -i))
    full = scores[-1] if search_config.include_full_set else None
    if full is not None and math.isnan(full):
        full = None
    return SubsetSearchResult(subsets[best], best, scores[best], scores, search_config.seed, full, results)


@dataclass
class RankingReport:
    method_ids: list[str]
    oss_scores: list[float]
    map_scores: Optional[list[float]] = None
    oss_ranks: list[int] = field(default_factory=list)
    map_ranks: Optional[list[int]] = None
    pearson: Optional[CorrelationResult] = None
    kendall: Optional[CorrelationResult] = None

    def order(self, by="oss") -> list[str]:
        ranks = self.oss_ranks if by == "oss" else self.map_ranks
        return [m for _, m in sorted(zip(ranks, self.method_ids))]

    def to_dict(self):
        return {
            "methods": [
                {
                    "method_id": m,
                    "oss": self.oss_scores[i],
                    "oss_rank": self.oss_ranks[i],
                    "map": None if self.map_scores is None else self.map_scores[i],
                    "map_rank": None if self.map_ranks is None else self.map_ranks[i],
                }
                for i, m in enumerate(self.method_ids)
            ],
            "pearson": None if self.pearson is None else self.pearson.to_dict(),
            "kendall": None if self.kendall is None else self.kendall.to_dict(),
        }


def rank_scores(method_ids: Sequence[str], scores: Sequence[float]) -> list[int]:
    """1-based ranks by descending score; equal scores rank lexicographically by id."""
    if len(method_ids) != len(scores):
        raise ValueError("ids and scores must align")
    if len(set(method_ids)) != len(method_ids):
        raise ValueError("duplicate method id")
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], method_ids[i]))
    ranks = [0] * len(scores)
    for pos, i in enumerate(order, start=1):
        ranks[i] = pos
    return ranks


def rank_methods(oss_results) -> RankingReport:
    """Rank methods by OSS.

    Accepts OSSResults (method id = set id) or a mapping of id to score.
    """
    if isinstance(oss_results, Mapping):
        ids = list(oss_results)
        scores = [float(oss_results[m]) for m in ids]
    else:
        ids = [r.set_id for r in oss_results]
        scores = [r.oss for r in oss_results]
    if len(ids) < 2:
        raise ValueError("ranking needs at least two methods")
    return RankingReport(ids, scores, oss_ranks=rank_scores(ids, scores))


def correlate_with_map(method_ids: Sequence[str], oss_scores: Sequence[float], map_scores: Sequence[float]) -> RankingReport:
    """Pearson r on raw scores, Kendall tau between the two induced rankings."""
    ids = list(method_ids)
    if not (len(ids) == len(oss_scores) == len(map_scores)):
        raise ValueError("method ids, OSS and mAP scores must align")
    if len(ids) < 3:
        raise ValueError("correlation needs at least three methods")
    oss_scores = [float(s) for s in oss_scores]
    map_scores = [float(s) for s in map_scores]
    oss_ranks = rank_scores(ids, oss_scores)
    map_ranks = rank_scores(ids, map_scores)
    return RankingReport(
        ids,
        oss_scores,
        map_scores,
        oss_ranks,
        map_ranks,
        pearson(oss_scores, map_scores),
        kendall_tau(oss_ranks, map_ranks),
    )


def eliminate(ranking: RankingReport, keep_top: int) -> tuple[list[str], list[str]]:
    """Split methods into the best ``keep_top`` by OSS rank and the rest."""
    m = len(ranking.method_ids)
    if not 1 <= keep_top <= m:
        raise ValueError(f"keep_top must lie in [1, {m}]")
    order = ranking.order("oss")
    return order[:keep_top], order[keep_top:]


def savings(costs: Sequence[float], i: int) -> tuple[float, float]:
    """GPU-hours saved by stopping a method at iteration ``i``.

    ``costs[0]`` is the warm-up run. Eliminating on OSS happens before
    iteration i trains; eliminating on mAP needs iteration i trained first.
    """
    n_i = len(costs) - 1
    if n_i < 1:
        raise ValueError("cost table needs a warm-up entry and at least one iteration")
    if not 1 <= i <= n_i - 1:
        raise ValueError(f"iteration must lie in [1, {n_i - 1}], got {i}")
    if any(c < 0 for c in costs):
        raise ValueError("costs must be non-negative")
    s_oss = sum(costs[i:])
    return s_oss, s_oss - costs[i]


def read_cost_table(path) -> list[float]:
    """Two-column CSV (iteration, gpu_hours); rows are reordered by iteration."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.reader(fh):
            if not rec or not rec[0].strip() or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((int(rec[0]), float(rec[1])))
            except ValueError:
                if not rows:
                    continue  # header line
                raise
    rows.sort()
    if [it for it, _ in rows] != list(range(len(rows))):
        raise ValueError("cost table iterations must be 0..n without gaps")
    return [c for _, c in rows]

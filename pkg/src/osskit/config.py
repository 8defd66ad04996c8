"""Run configuration stored as YAML."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from osskit.features import FeatureConfig
from osskit.osscore import OSSConfig
from osskit.select import SubsetSearchConfig

DATASET_FORMATS = ("coco", "kitti")


class ConfigError(ValueError):
    pass


@dataclass
class DatasetEntry:
    format: str
    images: str
    annotations: Optional[str] = None  # COCO JSON file
    labels: Optional[str] = None  # KITTI label directory
    aliases: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.format not in DATASET_FORMATS:
            raise ConfigError(f"dataset format must be one of {DATASET_FORMATS}, got {self.format!r}")
        if self.format == "coco" and not self.annotations:
            raise ConfigError("coco datasets need an 'annotations' file")
        if self.format == "kitti" and not self.labels:
            raise ConfigError("kitti datasets need a 'labels' directory")


@dataclass
class RunConfig:
    seed: int = 0
    out: str = "reports"
    threads: Optional[int] = None
    verbosity: str = "info"
    min_side_px: int = 2
    aliases: dict = field(default_factory=dict)
    datasets: dict = field(default_factory=dict)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    oss: OSSConfig = field(default_factory=OSSConfig)
    search: SubsetSearchConfig = field(default_factory=SubsetSearchConfig)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def oss_config(self) -> OSSConfig:
        return dataclasses.replace(self.oss, seed=self.seed)

    def search_config(self) -> SubsetSearchConfig:
        return dataclasses.replace(self.search, seed=self.seed)

    def to_dict(self, include_runtime=True) -> dict:
        d = {
            "seed": self.seed,
            "min_side_px": self.min_side_px,
            "aliases": dict(self.aliases),
            "datasets": {k: {kk: vv for kk, vv in dataclasses.asdict(v).items() if vv not in (None, {})} for k, v in self.datasets.items()},
            "features": dataclasses.asdict(self.features),
            "oss": {k: v for k, v in dataclasses.asdict(self.oss).items() if k != "seed"},
            "search": {k: v for k, v in dataclasses.asdict(self.search).items() if k != "seed"},
        }
        if include_runtime:
            d["out"] = self.out
            d["threads"] = self.threads
            d["verbosity"] = self.verbosity
        return d

    @classmethod
    def from_dict(cls, d: dict, base_dir=Path(".")) -> "RunConfig":
        d = dict(d or {})
        for section in ("oss", "search"):
            if isinstance(d.get(section), dict) and "seed" in d[section]:
                raise ConfigError(f"set the top-level 'seed' instead of {section}.seed")
        try:
            datasets = {str(k): DatasetEntry(**v) for k, v in (d.pop("datasets", None) or {}).items()}
            features = FeatureConfig(**(d.pop("features", None) or {}))
            oss = OSSConfig(**(d.pop("oss", None) or {}))
            search = SubsetSearchConfig(**(d.pop("search", None) or {}))
            return cls(datasets=datasets, features=features, oss=oss, search=search, base_dir=Path(base_dir), **d)
        except TypeError as exc:
            raise ConfigError(f"invalid configuration: {exc}") from exc
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("config file must contain a mapping")
    return RunConfig.from_dict(doc or {}, base_dir=path.parent)


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)

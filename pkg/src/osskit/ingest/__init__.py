"""Annotation parsing, crop extraction and feature-table persistence."""

from osskit.ingest.annotations import (
    Annotation,
    BBox,
    DatasetManifest,
    ImageEntry,
    RecordIssue,
    canonical_class,
    parse_coco,
    parse_kitti,
)
from osskit.ingest.crops import CropRecord, SkipSummary, clip_box, extract_crops
from osskit.ingest.table import (
    FORMAT_VERSION,
    FeatureTable,
    align_tables,
    concat_tables,
    decode_feature_table,
    encode_feature_table,
    load_feature_table,
    save_feature_table,
)

__all__ = [
    "Annotation",
    "BBox",
    "CropRecord",
    "DatasetManifest",
    "FORMAT_VERSION",
    "FeatureTable",
    "ImageEntry",
    "RecordIssue",
    "SkipSummary",
    "align_tables",
    "concat_tables",
    "canonical_class",
    "clip_box",
    "decode_feature_table",
    "encode_feature_table",
    "extract_crops",
    "load_feature_table",
    "parse_coco",
    "parse_kitti",
    "save_feature_table",
]

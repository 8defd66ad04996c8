"""COCO and KITTI annotation parsing into a common manifest."""

from __future__ import annotations

import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Mapping, Union

from PIL import Image

from osskit.errors import ParseError

log = logging.getLogger(__name__)

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")
KITTI_IGNORE = "DontCare"


@dataclass(frozen=True)
class BBox:
    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self):
        vals = (self.left, self.top, self.right, self.bottom)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise ValueError(f"bbox coordinates must be finite and >= 0: {vals}")
        if not (self.right > self.left and self.bottom > self.top):
            raise ValueError(f"degenerate bbox: {vals}")

    @classmethod
    def from_xywh(cls, x, y, w, h):
        return cls(float(x), float(y), float(x) + float(w), float(y) + float(h))

    @property
    def width(self):
        return self.right - self.left

    @property
    def height(self):
        return self.bottom - self.top


@dataclass(frozen=True)
class Annotation:
    image_id: str
    class_name: str
    bbox: BBox


@dataclass(frozen=True)
class ImageEntry:
    image_id: str
    path: Path
    width: int
    height: int


@dataclass(frozen=True)
class RecordIssue:
    """A record-level problem that was skipped instead of aborting the parse."""

    source: str
    reason: str
    detail: str = ""

    def to_dict(self):
        return {"source": self.source, "reason": self.reason, "detail": self.detail}


@dataclass
class DatasetManifest:
    images: list[ImageEntry]
    annotations: list[Annotation]
    class_catalog: list[str]
    issues: list[RecordIssue] = field(default_factory=list)

    def __post_init__(self):
        ids = [im.image_id for im in self.images]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate image_id in manifest")
        if len(set(self.class_catalog)) != len(self.class_catalog):
            raise ValueError("duplicate class name in catalog")
        known = set(ids)
        catalog = set(self.class_catalog)
        for ann in self.annotations:
            if ann.image_id not in known:
                raise ValueError(f"annotation references unknown image {ann.image_id!r}")
            if ann.class_name not in catalog:
                raise ValueError(f"annotation class {ann.class_name!r} not in catalog")
        for im in self.images:
            if im.width <= 0 or im.height <= 0:
                raise ValueError(f"image {im.image_id!r} has non-positive size")

    def class_index(self, name):
        return self.class_catalog.index(name)

    def summary(self):
        return {
            "images": len(self.images),
            "annotations": len(self.annotations),
            "classes": list(self.class_catalog),
            "issues": [i.to_dict() for i in self.issues],
        }


def _canonicalize(images, annotations, catalog, issues):
    # Stable sort keeps the per-image annotation order from the source file.
    images = sorted(images, key=lambda im: im.image_id)
    annotations = sorted(annotations, key=lambda a: a.image_id)
    return DatasetManifest(images, annotations, catalog, issues)


def parse_coco(annotation_file: Union[str, os.PathLike, BinaryIO, bytes], image_root) -> DatasetManifest:
    """Parse a COCO-style detection JSON.

    Category ids are mapped to the class catalog in ascending id order. Bad
    annotations are collected in ``manifest.issues`` and skipped.
    """
    path = None
    if isinstance(annotation_file, (bytes, bytearray)):
        raw = bytes(annotation_file)
    elif isinstance(annotation_file, (str, os.PathLike)):
        path = Path(annotation_file)
        raw = path.read_bytes()
    else:
        raw = annotation_file.read()

    try:
        text = raw.decode("utf-8-sig")
    except UnicodeDecodeError as exc:
        raise ParseError(f"annotation file is not UTF-8: {exc.reason}", offset=exc.start, path=path) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        if raw.startswith(b"\xef\xbb\xbf"):
            offset += 3
        raise ParseError(f"malformed JSON: {exc.msg}", offset=offset, path=path) from exc

    if not isinstance(doc, dict):
        raise ParseError("top-level JSON value must be an object", path=path)
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise ParseError(f"missing or non-list field {key!r}", path=path)

    image_root = Path(image_root)
    issues = []

    categories = {}
    for cat in doc["categories"]:
        try:
            categories[int(cat["id"])] = str(cat["name"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad category entry {cat!r}", path=path) from exc
    catalog = [categories[cid] for cid in sorted(categories)]
    if len(set(catalog)) != len(catalog):
        raise ParseError("duplicate category names", path=path)

    images = {}
    for im in doc["images"]:
        try:
            image_id = str(im["id"])
            entry = ImageEntry(image_id, image_root / im["file_name"], int(im["width"]), int(im["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(RecordIssue(f"image {im!r:.80}", "bad_image_record", str(exc)))
            continue
        if entry.width <= 0 or entry.height <= 0:
            issues.append(RecordIssue(f"image {image_id}", "bad_image_size"))
            continue
        if image_id in images:
            raise ParseError(f"duplicate image id {image_id!r}", path=path)
        images[image_id] = entry

    annotations = []
    for idx, ann in enumerate(doc["annotations"]):
        src = f"annotation[{idx}]"
        try:
            image_id = str(ann["image_id"])
            cat_id = int(ann["category_id"])
            x, y, w, h = ann["bbox"]
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(RecordIssue(src, "bad_annotation_record", str(exc)))
            continue
        if image_id not in images:
            issues.append(RecordIssue(src, "unknown_image", image_id))
            continue
        if cat_id not in categories:
            issues.append(RecordIssue(src, "unknown_category", str(cat_id)))
            continue
        try:
            box = BBox.from_xywh(x, y, w, h)
        except (TypeError, ValueError) as exc:
            issues.append(RecordIssue(src, "invalid_bbox", str(exc)))
            continue
        annotations.append(Annotation(image_id, categories[cat_id], box))

    if issues:
        log.warning("COCO parse: %d record-level issues", len(issues))
    return _canonicalize(list(images.values()), annotations, catalog, issues)


def _find_image(image_dir: Path, stem: str):
    for ext in IMAGE_EXTENSIONS:
        candidate = image_dir / f"{stem}{ext}"
        if candidate.is_file():
            return candidate
    return None


def parse_kitti(label_dir, image_dir) -> DatasetManifest:
    """Parse a KITTI object label directory (one ``.txt`` per image)."""
    label_dir = Path(label_dir)
    image_dir = Path(image_dir)
    if not label_dir.is_dir():
        raise FileNotFoundError(f"label directory not found: {label_dir}")
    if not image_dir.is_dir():
        raise FileNotFoundError(f"image directory not found: {image_dir}")

    issues = []
    images = []
    annotations = []
    for label_path in sorted(label_dir.glob("*.txt"), key=lambda p: p.stem):
        image_id = label_path.stem
        image_path = _find_image(image_dir, image_id)
        if image_path is None:
            log.warning("no image for label file %s; skipped", label_path.name)
            issues.append(RecordIssue(label_path.name, "missing_image"))
            continue
        try:
            with Image.open(image_path) as im:
                width, height = im.size
        except (OSError, ValueError) as exc:
            log.warning("unreadable image header %s; skipped", image_path)
            issues.append(RecordIssue(label_path.name, "unreadable_image", str(exc)))
            continue

        text = label_path.read_text(encoding="utf-8")
        for lineno, line in enumerate(io.StringIO(text), start=1):
            cols = line.split()
            if not cols:
                continue
            src = f"{label_path.name}:{lineno}"
            if len(cols) < 8:
                issues.append(RecordIssue(src, "too_few_columns", str(len(cols))))
                continue
            if cols[0] == KITTI_IGNORE:
                continue
            try:
                box = BBox(*(float(c) for c in cols[4:8]))
            except ValueError as exc:
                issues.append(RecordIssue(src, "invalid_bbox", str(exc)))
                continue
            annotations.append(Annotation(image_id, cols[0], box))
        images.append(ImageEntry(image_id, image_path, int(width), int(height)))

    catalog = sorted({a.class_name for a in annotations})
    if issues:
        log.warning("KITTI parse: %d record-level issues", len(issues))
    return _canonicalize(images, annotations, catalog, issues)


def canonical_class(name: str, aliases: Mapping[str, str] | None = None) -> str:
    """Key used to match class names across datasets.

    Matching is case-insensitive; ``aliases`` maps (case-insensitively) a name
    onto another name before comparison.
    """
    key = name.strip().lower()
    if aliases:
        lowered = {k.strip().lower(): v for k, v in aliases.items()}
        if key in lowered:
            key = lowered[key].strip().lower()
    return key

"""Object crop extraction from decoded images."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from PIL import Image

from osskit.ingest.annotations import DatasetManifest

log = logging.getLogger(__name__)

DEFAULT_MIN_SIDE_PX = 2


@dataclass
class CropRecord:
    image_id: str
    class_id: int
    pixels: np.ndarray  # H x W x 3, uint8 RGB
    annotation_index: int = -1

    def __post_init__(self):
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3 or self.pixels.dtype != np.uint8:
            raise ValueError(f"crop pixels must be HxWx3 uint8, got {self.pixels.shape} {self.pixels.dtype}")
        if self.pixels.shape[0] < 1 or self.pixels.shape[1] < 1:
            raise ValueError("crop must be at least 1x1")

    @property
    def width_px(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.pixels.shape[0])


@dataclass
class SkipSummary:
    """Exhaustive accounting of annotations that did not yield a crop."""

    annotations: int = 0
    crops: int = 0
    skipped: list[dict] = field(default_factory=list)

    def add(self, annotation_index, image_id, reason):
        self.skipped.append({"annotation_index": annotation_index, "image_id": image_id, "reason": reason})

    def reasons(self):
        counts = {}
        for s in self.skipped:
            counts[s["reason"]] = counts.get(s["reason"], 0) + 1
        return dict(sorted(counts.items()))

    def to_dict(self):
        return {
            "annotations": self.annotations,
            "crops": self.crops,
            "skipped": len(self.skipped),
            "skip_reasons": self.reasons(),
            "skipped_records": list(self.skipped),
        }


def clip_box(bbox, width, height):
    """Integer pixel rectangle of ``bbox`` clipped to the image, or None.

    The rectangle is half-open: columns [x0, x1) and rows [y0, y1).
    """
    left = min(max(bbox.left, 0.0), float(width))
    right = min(max(bbox.right, 0.0), float(width))
    top = min(max(bbox.top, 0.0), float(height))
    bottom = min(max(bbox.bottom, 0.0), float(height))
    if right <= left or bottom <= top:
        return None
    return math.floor(left), math.floor(top), math.ceil(right), math.ceil(bottom)


def _decode(path):
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def _image_crops(entry, items, class_ids, min_side_px, summary_items):
    """Crops for one image; ``items`` is a list of (annotation_index, Annotation)."""
    try:
        pixels = _decode(entry.path)
    except (OSError, ValueError) as exc:
        log.warning("cannot decode %s: %s", entry.path, exc)
        for idx, ann in items:
            summary_items.append((idx, ann.image_id, "undecodable_image"))
        return []
    h, w = pixels.shape[:2]
    out = []
    for idx, ann in items:
        rect = clip_box(ann.bbox, w, h)
        if rect is None:
            log.warning("box %d of image %s lies outside the image", idx, ann.image_id)
            summary_items.append((idx, ann.image_id, "outside_image"))
            continue
        x0, y0, x1, y1 = rect
        if x1 - x0 < min_side_px or y1 - y0 < min_side_px:
            summary_items.append((idx, ann.image_id, "below_min_side"))
            continue
        crop = np.ascontiguousarray(pixels[y0:y1, x0:x1])
        out.append(CropRecord(ann.image_id, class_ids[ann.class_name], crop, idx))
    return out


def extract_crops(
    manifest: DatasetManifest,
    min_side_px: int = DEFAULT_MIN_SIDE_PX,
    summary: SkipSummary | None = None,
    threads: int = 1,
) -> Iterator[CropRecord]:
    """Yield one CropRecord per usable annotation, ordered by (image_id, annotation index).

    Pass a ``SkipSummary`` to collect the skipped annotations; it is complete
    once the generator is exhausted.
    """
    if min_side_px < 1:
        raise ValueError("min_side_px must be >= 1")
    if summary is None:
        summary = SkipSummary()
    class_ids = {name: i for i, name in enumerate(manifest.class_catalog)}
    by_image = {}
    for idx, ann in enumerate(manifest.annotations):
        by_image.setdefault(ann.image_id, []).append((idx, ann))
    summary.annotations += len(manifest.annotations)
    entries = [im for im in sorted(manifest.images, key=lambda im: im.image_id) if im.image_id in by_image]

    def job(entry):
        skipped = []
        crops = _image_crops(entry, by_image[entry.image_id], class_ids, min_side_px, skipped)
        return crops, skipped

    def consume(results):
        for crops, skipped in results:
            for s in skipped:
                summary.add(*s)
            summary.crops += len(crops)
            yield from crops

    if threads <= 1:
        yield from consume(map(job, entries))
        return
    # Bounded window keeps memory flat while preserving input order.
    window = max(4 * threads, 16)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for start in range(0, len(entries), window):
            yield from consume(pool.map(job, entries[start : start + window]))

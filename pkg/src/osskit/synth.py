"""Synthetic detection datasets with planted, controllable distribution shift.

Objects are axis-aligned noise-textured rectangles on a flat canvas. Layout
(class, size, aspect-ratio draw, position) and appearance come from separate
seed streams, so two variants that differ only in their shift level share
object counts and placement draw-for-draw.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from osskit.ingest.annotations import Annotation, BBox, DatasetManifest, ImageEntry
from osskit.stats.seeding import derive_seed

ANNOTATION_FILE = "annotations.json"
IMAGE_DIR = "images"


@dataclass(frozen=True)
class ClassSpec:
    name: str
    frequency: float
    ar_log_mean: float = 0.0
    ar_log_sigma: float = 0.2
    color: tuple = (128.0, 128.0, 128.0)
    color_jitter: float = 10.0
    texture: float = 8.0  # std of per-pixel luminance noise
    size_range: tuple = (16, 48)  # sqrt(box area) in px


@dataclass(frozen=True)
class ClassShift:
    name: str
    color: tuple = (0.0, 0.0, 0.0)
    ar_log_mean: float = 0.0
    texture: float = 0.0
    size: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple
    n_images: int = 100
    canvas: tuple = (256, 256)  # width, height
    objects_per_image: float = 5.0  # Poisson mean
    background: float = 110.0
    shift: tuple = ()
    shift_level: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.classes:
            raise ValueError("at least one class is required")
        total = sum(c.frequency for c in self.classes)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"class frequencies must sum to 1, got {total}")
        names = [c.name for c in self.classes]
        if len(set(names)) != len(names):
            raise ValueError("duplicate class names")
        w, h = self.canvas
        for c in self.classes:
            lo, hi = c.size_range
            if not (1 <= lo <= hi <= min(w, h)):
                raise ValueError(f"size range of {c.name!r} must lie within the canvas")
            if c.ar_log_sigma < 0 or c.color_jitter < 0 or c.texture < 0 or c.frequency < 0:
                raise ValueError(f"negative spread or frequency for {c.name!r}")
        unknown = {s.name for s in self.shift} - set(names)
        if unknown:
            raise ValueError(f"shift refers to unknown classes {sorted(unknown)}")
        if self.n_images < 0 or self.objects_per_image < 0:
            raise ValueError("image count and object rate must be non-negative")

    def effective_class(self, j: int) -> ClassSpec:
        """Class parameters with the shift deltas applied at ``shift_level``."""
        base = self.classes[j]
        s = self.shift_level
        for delta in self.shift:
            if delta.name != base.name or s == 0:
                continue
            base = replace(
                base,
                color=tuple(c + s * d for c, d in zip(base.color, delta.color)),
                ar_log_mean=base.ar_log_mean + s * delta.ar_log_mean,
                texture=max(0.0, base.texture + s * delta.texture),
                size_range=tuple(v + s * delta.size for v in base.size_range),
            )
        return base

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["classes"] = tuple(ClassSpec(**{**c, **_tuples(c, ("color", "size_range"))}) for c in d["classes"])
        d["shift"] = tuple(ClassShift(**{**s, **_tuples(s, ("color",))}) for s in d.get("shift", ()))
        if "canvas" in d:
            d["canvas"] = tuple(d["canvas"])
        return cls(**d)


def _tuples(d, keys):
    return {k: tuple(d[k]) for k in keys if k in d}


def _layout(spec: SynthSpec, index: int):
    rng = np.random.default_rng(derive_seed(spec.seed, index, 0))
    freqs = np.array([c.frequency for c in spec.classes])
    n_obj = int(rng.poisson(spec.objects_per_image))
    out = []
    for _ in range(n_obj):
        j = int(rng.choice(len(freqs), p=freqs))
        size_u, ar_z, ux, uy = rng.random(), rng.standard_normal(), rng.random(), rng.random()
        out.append((j, size_u, ar_z, ux, uy))
    return out


def render_image(spec: SynthSpec, index: int):
    """Pixels (H x W x 3 uint8) and exact integer boxes [(class_id, x, y, w, h)]."""
    width, height = spec.canvas
    canvas = np.full((height, width, 3), spec.background, dtype=np.float64)
    boxes = []
    for k, (j, size_u, ar_z, ux, uy) in enumerate(_layout(spec, index)):
        cls = spec.effective_class(j)
        lo, hi = cls.size_range
        side = lo + size_u * (hi - lo)
        ar = math.exp(cls.ar_log_mean + cls.ar_log_sigma * ar_z)
        w = int(min(width, max(1, round(side * math.sqrt(ar)))))
        h = int(min(height, max(1, round(side / math.sqrt(ar)))))
        x = int(ux * (width - w + 1))
        y = int(uy * (height - h + 1))
        rng = np.random.default_rng(derive_seed(spec.seed, index, 1, k))
        color = np.asarray(cls.color, dtype=np.float64) + cls.color_jitter * rng.standard_normal(3)
        noise = cls.texture * rng.standard_normal((h, w, 1))
        canvas[y : y + h, x : x + w] = color + noise
        boxes.append((j, x, y, w, h))
    pixels = np.clip(np.rint(canvas), 0, 255).astype(np.uint8)
    return pixels, boxes


def _coco_document(spec, records):
    images, annotations = [], []
    ann_id = 1
    for index, file_name, boxes in records:
        images.append({"id": index, "file_name": file_name, "width": spec.canvas[0], "height": spec.canvas[1]})
        for j, x, y, w, h in boxes:
            annotations.append(
                {"id": ann_id, "image_id": index, "category_id": j + 1, "bbox": [x, y, w, h], "area": w * h, "iscrowd": 0}
            )
            ann_id += 1
    categories = [{"id": j + 1, "name": c.name} for j, c in enumerate(spec.classes)]
    return {"images": images, "annotations": annotations, "categories": categories}


def generate(spec: SynthSpec, out_dir, threads: int = 1) -> DatasetManifest:
    """Render the dataset to ``out_dir`` (PNG images plus a COCO JSON manifest)."""
    out_dir = Path(out_dir)
    image_dir = out_dir / IMAGE_DIR
    image_dir.mkdir(parents=True, exist_ok=True)

    def job(index):
        pixels, boxes = render_image(spec, index)
        name = f"{index:06d}.png"
        Image.fromarray(pixels).save(image_dir / name, compress_level=1)
        return index, name, boxes

    indices = range(spec.n_images)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(job, indices))
    else:
        records = [job(i) for i in indices]

    doc = _coco_document(spec, records)
    (out_dir / ANNOTATION_FILE).write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")

    names = [c.name for c in spec.classes]
    images = [ImageEntry(str(i), image_dir / name, spec.canvas[0], spec.canvas[1]) for i, name, _ in records]
    annotations = [
        Annotation(str(i), names[j], BBox.from_xywh(x, y, w, h)) for i, _, boxes in records for j, x, y, w, h in boxes
    ]
    images.sort(key=lambda im: im.image_id)
    annotations.sort(key=lambda a: a.image_id)
    return DatasetManifest(images, annotations, names)


def shift_ladder(spec: SynthSpec, levels: Sequence[float], out_dir=None, threads: int = 1):
    """Variants of ``spec`` at increasing shift levels, all sharing its seed.

    Returns the variant specs, or the generated manifests when ``out_dir`` is
    given (one ``level_<i>`` subdirectory each).
    """
    levels = list(levels)
    mags = [abs(v) for v in levels]
    if any(b <= a for a, b in zip(mags, mags[1:])):
        raise ValueError("shift levels must be strictly increasing in magnitude")
    variants = [replace(spec, shift_level=float(v)) for v in levels]
    if out_dir is None:
        return variants
    return [generate(v, Path(out_dir) / f"level_{i}", threads) for i, v in enumerate(variants)]

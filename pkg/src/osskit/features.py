"""Per-crop scalar features: shape, texture and colour descriptors."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from scipy.fft import dctn

from osskit.ingest.crops import CropRecord, SkipSummary, extract_crops
from osskit.ingest.table import FeatureTable

log = logging.getLogger(__name__)

FEATURE_ORDER = ("AR", "DCT", "CH", "HUE", "SAT", "VAL")
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class FeatureConfig:
    use_ar: bool = True
    use_dct: bool = True
    use_ch: bool = True
    use_hue: bool = False
    use_sat: bool = False
    use_val: bool = False
    dct_resize_px: int = 64
    ch_bins_per_channel: int = 8
    ch_normalized: bool = False

    def __post_init__(self):
        if not any(self.flags()):
            raise ValueError("at least one feature must be enabled")
        if self.dct_resize_px < 8:
            raise ValueError("dct_resize_px must be >= 8")
        if not 2 <= self.ch_bins_per_channel <= 32:
            raise ValueError("ch_bins_per_channel must be in [2, 32]")

    def flags(self):
        return (self.use_ar, self.use_dct, self.use_ch, self.use_hue, self.use_sat, self.use_val)

    @property
    def schema(self) -> list[str]:
        return [name for name, on in zip(FEATURE_ORDER, self.flags()) if on]

    def to_dict(self):
        return asdict(self)


def aspect_ratio(crop: CropRecord) -> float:
    return crop.width_px / crop.height_px


def to_gray(pixels: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64."""
    return pixels.astype(np.float64) @ LUMA_WEIGHTS


@lru_cache(maxsize=256)
def _bilinear_matrix(n_in: int, n_out: int) -> np.ndarray:
    # Half-pixel-centre sampling with edge clamping; rows sum to 1.
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    m.setflags(write=False)
    return m


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Separable bilinear resize of a 2-D float array."""
    rows = _bilinear_matrix(img.shape[0], height)
    cols = _bilinear_matrix(img.shape[1], width)
    return rows @ img @ cols.T


def dct_mean_gray(gray: np.ndarray, resize_px: int = 64) -> float:
    resized = resize_bilinear(gray, resize_px, resize_px)
    return float(dctn(resized, type=2, norm="ortho").mean())


def dct_mean(crop: CropRecord, dct_resize_px: int = 64) -> float:
    """Mean orthonormal 2-D DCT-II coefficient of the resized luma crop."""
    return dct_mean_gray(to_gray(crop.pixels), dct_resize_px)


def color_histogram(pixels: np.ndarray, bins: int) -> np.ndarray:
    """Flattened bins**3 joint RGB histogram with uniform edges on [0, 256)."""
    q = pixels.reshape(-1, 3).astype(np.int64) * bins // 256
    flat = (q[:, 0] * bins + q[:, 1]) * bins + q[:, 2]
    return np.bincount(flat, minlength=bins**3)


def color_hist_mean(crop: CropRecord, bins_per_channel: int = 8, normalized: bool = False) -> float:
    """Mean of the flattened colour histogram.

    The raw-count mean is pixel_count / bins**3. With ``normalized`` the
    occupancy fraction (non-empty bins / bins**3) is returned instead.
    """
    hist = color_histogram(crop.pixels, bins_per_channel)
    if normalized:
        return float(np.count_nonzero(hist)) / hist.size
    return float(hist.sum()) / hist.size


def hsv_pixels(pixels: np.ndarray):
    """Per-pixel hue in degrees [0, 360), saturation and value in [0, 1]."""
    rgb = pixels.reshape(-1, 3).astype(np.float64) / 255.0
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    vmax = rgb.max(axis=1)
    vmin = rgb.min(axis=1)
    delta = vmax - vmin
    sat = np.divide(delta, vmax, out=np.zeros_like(vmax), where=vmax > 0)
    hue = np.zeros_like(vmax)
    safe = np.where(delta > 0, delta, 1.0)
    rmax = (delta > 0) & (vmax == r)
    gmax = (delta > 0) & (vmax == g) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    hue[rmax] = (60.0 * (g - b) / safe)[rmax] % 360.0
    hue[gmax] = (60.0 * (b - r) / safe + 120.0)[gmax]
    hue[bmax] = (60.0 * (r - g) / safe + 240.0)[bmax]
    return hue, sat, vmax


def hsv_means(crop: CropRecord) -> tuple[float, float, float]:
    hue, sat, val = hsv_pixels(crop.pixels)
    return float(hue.mean()), float(sat.mean()), float(val.mean())


def feature_vector(crop: CropRecord, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    values = []
    if config.use_ar:
        values.append(aspect_ratio(crop))
    if config.use_dct:
        values.append(dct_mean(crop, config.dct_resize_px))
    if config.use_ch:
        values.append(color_hist_mean(crop, config.ch_bins_per_channel, config.ch_normalized))
    if config.use_hue or config.use_sat or config.use_val:
        hue, sat, val = hsv_means(crop)
        values.extend(v for v, on in zip((hue, sat, val), config.flags()[3:]) if on)
    return np.asarray(values, dtype=np.float64)


def featurize_table(
    crops: Iterable[CropRecord],
    config: FeatureConfig = FeatureConfig(),
    set_id: str = "",
    class_catalog: list[str] | None = None,
    dropped: list | None = None,
) -> FeatureTable:
    """One feature row per crop, in input order.

    Rows with a non-finite feature are left out and appended to ``dropped``.
    """
    class_ids, rows, image_ids = [], [], []
    for crop in crops:
        vec = feature_vector(crop, config)
        if not np.all(np.isfinite(vec)):
            log.warning("non-finite features for crop of %s; row dropped", crop.image_id)
            if dropped is not None:
                dropped.append({"image_id": crop.image_id, "annotation_index": crop.annotation_index})
            continue
        class_ids.append(crop.class_id)
        rows.append(vec)
        image_ids.append(crop.image_id)
    if class_catalog is None:
        top = max(class_ids, default=-1)
        class_catalog = [str(i) for i in range(top + 1)]
    d = len(config.schema)
    values = np.vstack(rows) if rows else np.zeros((0, d))
    return FeatureTable(set_id, list(class_catalog), config.schema, class_ids, values, image_ids)


def table_from_manifest(manifest, config: FeatureConfig = FeatureConfig(), set_id: str = "", min_side_px: int = 2, threads: int = 1):
    """Crop and featurize a whole manifest; returns (table, SkipSummary)."""
    summary = SkipSummary()
    dropped = []
    crops = extract_crops(manifest, min_side_px, summary, threads)
    table = featurize_table(crops, config, set_id, manifest.class_catalog, dropped)
    for d in dropped:
        summary.add(d["annotation_index"], d["image_id"], "non_finite_feature")
    summary.crops -= len(dropped)
    return table, summary

"""FeatureTable and its versioned binary cache file.

File layout (all integers little-endian)::

    magic      b"OSSFT\\0"
    version    u16
    set_id     str
    catalog    u32 count, then str each
    schema     u32 count, then str each
    images     u32 count, then str each      (distinct image ids, sorted)
    rows       u64 count
    class_id   u32 x rows
    image_ref  u32 x rows                    (index into images)
    values     f64 x rows x len(schema)      (row-major)
    crc32      u32 over every preceding byte

where ``str`` is a u32 byte length followed by UTF-8 bytes.
"""

from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from osskit.errors import IncompatibleVersionError, IntegrityError

MAGIC = b"OSSFT\x00"
FORMAT_VERSION = 1


@dataclass
class FeatureTable:
    set_id: str
    class_catalog: list[str]
    feature_schema: list[str]
    class_ids: np.ndarray = field(default=None)
    values: np.ndarray = field(default=None)
    image_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        d = len(self.feature_schema)
        if self.class_ids is None:
            self.class_ids = np.zeros(0, dtype=np.int64)
        if self.values is None:
            self.values = np.zeros((0, d), dtype=np.float64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1, d)
        self.image_ids = [str(i) for i in self.image_ids]
        n = len(self.class_ids)
        if self.values.shape[0] != n or len(self.image_ids) != n:
            raise ValueError("class_ids, values and image_ids must have the same length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature values must be finite")
        if n and (self.class_ids.min() < 0 or self.class_ids.max() >= len(self.class_catalog)):
            raise ValueError("class_id outside the class catalog")

    def __len__(self):
        return len(self.class_ids)

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            self.set_id == other.set_id
            and list(self.class_catalog) == list(other.class_catalog)
            and list(self.feature_schema) == list(other.feature_schema)
            and np.array_equal(self.class_ids, other.class_ids)
            and np.array_equal(self.values, other.values)
            and list(self.image_ids) == list(other.image_ids)
        )

    @property
    def dim(self):
        return len(self.feature_schema)

    def rows(self):
        for cid, vec, img in zip(self.class_ids, self.values, self.image_ids):
            yield int(cid), vec, img

    def class_rows(self, class_id: int) -> np.ndarray:
        return self.values[self.class_ids == class_id]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.class_ids, minlength=len(self.class_catalog)).astype(np.int64)

    def distinct_images(self) -> list[str]:
        return sorted(set(self.image_ids))

    def rows_by_image(self) -> dict[str, np.ndarray]:
        groups = {}
        for i, img in enumerate(self.image_ids):
            groups.setdefault(img, []).append(i)
        return {k: np.asarray(v, dtype=np.int64) for k, v in sorted(groups.items())}

    def take(self, index, set_id=None) -> "FeatureTable":
        index = np.asarray(index, dtype=np.int64)
        return FeatureTable(
            set_id if set_id is not None else self.set_id,
            list(self.class_catalog),
            list(self.feature_schema),
            self.class_ids[index],
            self.values[index],
            [self.image_ids[i] for i in index],
        )

    def select_images(self, image_ids: Sequence[str], set_id=None) -> "FeatureTable":
        wanted = set(image_ids)
        index = [i for i, img in enumerate(self.image_ids) if img in wanted]
        return self.take(index, set_id)

    def with_catalog(self, catalog: list[str], mapping: Sequence[int], set_id=None) -> "FeatureTable":
        """Re-express class ids against ``catalog``; ``mapping[old_id]`` is the new id."""
        mapping = np.asarray(mapping, dtype=np.int64)
        return FeatureTable(
            set_id if set_id is not None else self.set_id,
            list(catalog),
            list(self.feature_schema),
            mapping[self.class_ids] if len(self.class_ids) else self.class_ids,
            self.values,
            list(self.image_ids),
        )


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def encode_feature_table(table: FeatureTable) -> bytes:
    images = table.distinct_images()
    ref = {img: i for i, img in enumerate(images)}
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION), _pack_str(table.set_id)]
    for seq in (table.class_catalog, table.feature_schema, images):
        parts.append(struct.pack("<I", len(seq)))
        parts.extend(_pack_str(s) for s in seq)
    parts.append(struct.pack("<Q", len(table)))
    parts.append(table.class_ids.astype("<u4").tobytes())
    parts.append(np.asarray([ref[i] for i in table.image_ids], dtype="<u4").tobytes())
    parts.append(np.ascontiguousarray(table.values, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise IntegrityError("feature table file is truncated")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))[0]

    def string(self):
        try:
            return self.take(self.unpack("<I")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise IntegrityError("corrupt string in feature table") from exc

    def strings(self):
        return [self.string() for _ in range(self.unpack("<I"))]


def decode_feature_table(buf: bytes) -> FeatureTable:
    if len(buf) < len(MAGIC) + 2 + 4 or not buf.startswith(MAGIC):
        raise IntegrityError("not a feature table file (bad magic or truncated)")
    version = struct.unpack_from("<H", buf, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise IncompatibleVersionError(
            f"feature table format version {version} is not supported (expected {FORMAT_VERSION})"
        )
    body, stored = buf[:-4], struct.unpack("<I", buf[-4:])[0]
    if zlib.crc32(body) != stored:
        raise IntegrityError("feature table checksum mismatch")

    r = _Reader(body)
    r.take(len(MAGIC) + 2)
    set_id = r.string()
    catalog = r.strings()
    schema = r.strings()
    images = r.strings()
    n = r.unpack("<Q")
    d = len(schema)
    class_ids = np.frombuffer(r.take(4 * n), dtype="<u4").astype(np.int64)
    refs = np.frombuffer(r.take(4 * n), dtype="<u4")
    values = np.frombuffer(r.take(8 * n * d), dtype="<f8").astype(np.float64).reshape(n, d)
    if r.pos != len(body):
        raise IntegrityError("trailing bytes in feature table")
    if n and refs.max() >= len(images):
        raise IntegrityError("image reference out of range")
    return FeatureTable(set_id, catalog, schema, class_ids, values, [images[i] for i in refs])


def save_feature_table(table: FeatureTable, path) -> None:
    path = Path(path)
    data = encode_feature_table(table)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def load_feature_table(path) -> FeatureTable:
    return decode_feature_table(Path(path).read_bytes())


def align_tables(tables: Sequence[FeatureTable], aliases=None) -> list[FeatureTable]:
    """Map every table onto one shared class catalog.

    Names match case-insensitively after applying ``aliases``. The shared
    catalog lists the first table's classes in their order, then classes
    only seen in later tables in order of appearance.
    """
    from osskit.ingest.annotations import canonical_class

    keys = []
    display = {}
    for t in tables:
        for name in t.class_catalog:
            key = canonical_class(name, aliases)
            if key not in display:
                display[key] = name
                keys.append(key)
    position = {k: i for i, k in enumerate(keys)}
    catalog = [display[k] for k in keys]
    out = []
    for t in tables:
        mapping = [position[canonical_class(n, aliases)] for n in t.class_catalog]
        if len(set(mapping)) != len(mapping):
            raise ValueError(f"table {t.set_id!r} has classes that collapse onto one name")
        out.append(t.with_catalog(catalog, mapping))
    return out


def concat_tables(tables: Sequence[FeatureTable], set_id: str, prefix_images: bool = True) -> FeatureTable:
    """Stack tables that share a catalog and schema.

    With ``prefix_images`` image ids become ``"<source set_id>/<image_id>"`` so
    images from different sources stay distinct.
    """
    if not tables:
        raise ValueError("nothing to concatenate")
    first = tables[0]
    for t in tables[1:]:
        if t.class_catalog != first.class_catalog or t.feature_schema != first.feature_schema:
            raise ValueError("tables must share class catalog and feature schema")
    image_ids = []
    for t in tables:
        image_ids.extend(f"{t.set_id}/{i}" if prefix_images else i for i in t.image_ids)
    return FeatureTable(
        set_id,
        list(first.class_catalog),
        list(first.feature_schema),
        np.concatenate([t.class_ids for t in tables]),
        np.vstack([t.values for t in tables]),
        image_ids,
    )

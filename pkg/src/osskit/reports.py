"""Deterministic JSON and CSV report writers."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

from osskit import __version__

REPORT_SCHEMA_VERSION = 1


def _clean(obj):
    if isinstance(obj, float):
        return None if math.isnan(obj) or math.isinf(obj) else obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "item") and callable(obj.item):  # numpy scalars
        return _clean(obj.item())
    return obj


def header(command: str, seed, config: dict, inputs: dict | None = None) -> dict:
    return {
        "tool": "osskit",
        "version": __version__,
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": command,
        "seed": seed,
        "config": config,
        "inputs": inputs or {},
    }


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def dumps_csv(rows, fieldnames) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in fieldnames})
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_text(path, text: str) -> Path:
    """Write atomically so an interrupted run never leaves a half file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)
    return path


def read_score_csv(path, value_column=None) -> tuple[list[str], list[float]]:
    """Read (id, score) pairs from a CSV whose first column holds the id.

    The score column is ``value_column`` when given, otherwise the second
    column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or len(reader.fieldnames) < 2:
            raise ValueError(f"{path}: need an id column and a score column")
        id_col = reader.fieldnames[0]
        col = value_column or reader.fieldnames[1]
        if col not in reader.fieldnames:
            raise ValueError(f"{path}: no column {col!r}")
        ids, scores = [], []
        for row in reader:
            if not row[id_col]:
                continue
            ids.append(row[id_col])
            scores.append(float(row[col]) if row[col] not in ("", None) else math.nan)
    return ids, scores

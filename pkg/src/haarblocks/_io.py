"""JSON and CSV serialization of result artifacts."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, is_dataclass

import numpy as np


def to_jsonable(obj):
    """Recursively convert to JSON-native types; non-finite floats become strings."""
    if type(obj) is float:
        return obj if math.isfinite(obj) else ("nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf"))
    if type(obj) in (int, str) or obj is None:
        return obj
    if is_dataclass(obj) and not isinstance(obj, type):
        return to_jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def dumps_csv(rows: list[dict], header_comment: dict | None = None) -> str:
    """Rows as CSV; an optional ``# {json}`` first line carries the run config."""
    buf = io.StringIO()
    if header_comment is not None:
        buf.write("# " + json.dumps(to_jsonable(header_comment), separators=(",", ":")) + "\n")
    rows = [to_jsonable(r) for r in rows]
    fields: list[str] = []
    for r in rows:
        fields.extend(f for f in r if f not in fields)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    writer.writerows([["" if r.get(f) is None else r[f] for f in fields] for r in rows])
    return buf.getvalue()


def read_csv_rows(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))

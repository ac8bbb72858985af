"""Text serialization shared by the checks suite and the command line."""
from __future__ import annotations

import io
import json
import math
from typing import Iterable, Sequence


def fmt(v) -> str:
    """Floats with 17 significant digits (lossless for 64-bit values); other values as text."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        return f"{v:.17g}"
    if hasattr(v, "item"):  # numpy scalar
        return fmt(v.item())
    return str(v)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    return buf.getvalue()


def jsonl_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = []
    for row in rows:
        rec = {k: _plain(v) for k, v in zip(header, row)}
        lines.append(json.dumps(rec, sort_keys=False))
    return "\n".join(lines) + ("\n" if lines else "")


def table_text(header, rows, fmt_name: str = "csv") -> str:
    if fmt_name == "csv":
        return csv_text(header, rows)
    if fmt_name == "jsonl":
        return jsonl_text(header, rows)
    raise ValueError(f"unknown format {fmt_name!r}")


def _plain(v):
    if hasattr(v, "item"):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return _plain(obj)

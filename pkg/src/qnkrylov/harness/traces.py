"""JSON and CSV trace files.

JSON layout::

    {"header": {...}, "status": "converged", "rows": [{"k": 0, "res_norm": ..., ...}, ...]}

CSV layout: a first line ``# <header as JSON>``, then the column names
(``k, res_norm, rel_res, q, alpha, curvature, gamma, u_kk, zeta``), then one
row per iteration.  Absent values are ``null`` in JSON and empty cells in
CSV.  Floats are written with ``repr`` so reading a file back reproduces the
records bit for bit.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from ..core import TRACE_FIELDS, SolveTrace, TraceRecord

__all__ = ["TraceFile", "export_trace", "read_trace", "trace_file"]


@dataclass
class TraceFile:
    header: dict
    records: list = field(default_factory=list)
    status: Optional[str] = None

    @property
    def iterations(self) -> int:
        return self.records[-1].k if self.records else 0

    def rel_res(self):
        return [r.rel_res for r in self.records]

    def iterations_to(self, rel_res: float):
        for r in self.records:
            if r.rel_res <= rel_res:
                return r.k
        return None


def trace_file(trace, header: Optional[dict] = None) -> TraceFile:
    """Wrap a :class:`SolveTrace` (or pass a :class:`TraceFile` through)."""
    if isinstance(trace, TraceFile):
        return trace
    head = {"method": trace.method}
    head.update(header or {})
    return TraceFile(head, list(trace.records), trace.status)


def _format_of(path, fmt):
    if fmt is not None:
        fmt = fmt.lower()
    else:
        fmt = Path(path).suffix.lstrip(".").lower()
    if fmt not in ("json", "csv"):
        raise ValueError(f"unknown trace format {fmt!r}")
    return fmt


def _cell(v):
    return "" if v is None else (str(v) if isinstance(v, int) else repr(float(v)))


def dumps(tf: TraceFile, fmt: str) -> str:
    head = dict(tf.header)
    head["status"] = tf.status
    if fmt == "json":
        doc = {"header": tf.header, "status": tf.status,
               "rows": [r.as_dict() for r in tf.records]}
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"
    buf = io.StringIO()
    buf.write("# " + json.dumps(head, sort_keys=False) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_FIELDS)
    for r in tf.records:
        w.writerow([_cell(getattr(r, name)) for name in TRACE_FIELDS])
    return buf.getvalue()


def export_trace(trace, fmt: Optional[str] = None, path=None, header: Optional[dict] = None) -> TraceFile:
    """Write ``trace`` as JSON or CSV; the format defaults to the file suffix."""
    fmt = _format_of(path, fmt)
    tf = trace_file(trace, header)
    text = dumps(tf, fmt)
    Path(path).write_text(text, encoding="utf-8")
    return tf


def _record(row: dict) -> TraceRecord:
    vals = {}
    for name in TRACE_FIELDS:
        v = row.get(name)
        vals[name] = v if v is None else (int(v) if name == "k" else float(v))
    return TraceRecord(**vals)


def loads(text: str, fmt: str) -> TraceFile:
    if fmt == "json":
        doc = json.loads(text)
        return TraceFile(doc["header"], [_record(r) for r in doc["rows"]], doc.get("status"))
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError("CSV trace must start with a '# {header}' line")
    head = json.loads(lines[0][2:])
    status = head.pop("status", None)
    reader = csv.reader(lines[1:])
    cols = next(reader, None)
    if cols is None or tuple(cols) != TRACE_FIELDS:
        raise ValueError("CSV trace has unexpected columns")
    records = [_record({c: (v if v != "" else None) for c, v in zip(cols, row)}) for row in reader]
    return TraceFile(head, records, status)


def read_trace(path, fmt: Optional[str] = None) -> TraceFile:
    fmt = _format_of(path, fmt)
    return loads(Path(path).read_text(encoding="utf-8"), fmt)

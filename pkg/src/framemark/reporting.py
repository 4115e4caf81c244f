"""Canonical serialization helpers for command outputs.

All primary outputs are JSON with sorted keys (or a CSV projection of
the same rows), with no timestamps or environment details, so repeated
runs with identical inputs produce byte-identical files.
"""

from __future__ import annotations

import io
import json
import csv


def canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def rows_to_csv(rows, columns=None) -> str:
    """Render dict rows as CSV. Columns default to the union of keys in
    first-seen order; missing cells are empty."""
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def write_text(path, text: str):
    if path == "-":
        import sys
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)

"""CSV and JSON emission for result tables.

Floats are written with ``repr`` (shortest round-tripping form) so equal
results give byte-identical files.  CSV follows RFC 4180 quoting with a
header row; JSON is UTF-8 with sorted keys.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def rows_to_csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(fields))
    for r in rows:
        w.writerow([_cell(r.get(k)) for k in fields])
    return buf.getvalue()


def jsonable(v):
    """Plain Python values; non-finite floats become the strings "nan", "inf", "-inf"."""
    if isinstance(v, dict):
        return {str(k): jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else str(v)
    return v


def to_json(doc) -> str:
    return json.dumps(jsonable(doc), sort_keys=True, ensure_ascii=False) + "\n"


def rows_to_json(rows, fields) -> str:
    return to_json([{k: r.get(k) for k in fields} for r in rows])

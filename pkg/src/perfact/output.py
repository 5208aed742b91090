"""CSV and manifest writers with byte-stable formatting."""
from __future__ import annotations

import csv
import json
import math
from typing import Any, Iterable, Sequence


def format_value(v: Any) -> str:
    """17 significant digits for floats, empty field for missing values."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return format(v, ".17g")
    try:
        import numpy as np
        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return format_value(float(v))
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def emit_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path) -> None:
    rows = list(rows)
    for r in rows:
        if len(r) != len(header):
            raise ValueError(f"row of length {len(r)} does not match header of length {len(header)}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_value(v) for v in r])


def read_csv(path):
    """(header, rows) with all fields as strings."""
    with open(path, newline="") as fh:
        data = list(csv.reader(fh))
    return data[0], data[1:]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    try:
        import numpy as np
        if isinstance(x, np.integer):
            return int(x)
        if isinstance(x, np.floating):
            return _jsonable(float(x))
        if isinstance(x, np.ndarray):
            return _jsonable(x.tolist())
    except ImportError:  # pragma: no cover
        pass
    return x


def write_json(obj, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")

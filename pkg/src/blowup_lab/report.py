"""Deterministic CSV/JSON emission: fixed field order, 17 significant digits."""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

SCHEMA = 1


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def _json(obj, indent, level) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no nan/inf literals
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        import json

        return json.dumps(obj)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = [f'{pad}{_json(str(k), indent, 0)}: {_json(v, indent, level + 1)}' for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + _json(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    return _json(obj, indent, 0)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


def write_csv(path, columns: Sequence[str], rows: Iterable[Mapping]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={SCHEMA}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(row.get(c)) for c in columns) + "\n")


def read_csv(path) -> list[dict]:
    import csv

    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))

"""Canonical JSON text: fixed key order, floats at 17 significant digits.

``json.dumps`` writes the shortest round-trip repr of a float, which is not
a fixed digit count; documents here must be byte-stable across runs, so the
writer is spelled out.
"""
from __future__ import annotations

import json
import math
from typing import Any

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x + 0.0, ".17g")


def _dump(obj: Any, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return json.dumps(None if obj is None else bool(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_dump(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        # leaf arrays stay on one line
        return "[" + ", ".join(_dump(v, indent, level + 1) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any, indent: int = 2) -> str:
    return _dump(obj, indent, 0) + "\n"


def loads(text: str) -> Any:
    return json.loads(text)


def complex_entries(m: np.ndarray) -> list[list[float]]:
    flat = np.asarray(m, dtype=np.complex128).reshape(-1)
    return [[float(z.real), float(z.imag)] for z in flat]


def entries_to_matrix(entries: list, dim: int) -> np.ndarray:
    arr = np.asarray(entries, dtype=float)
    if arr.shape != (dim * dim, 2):
        raise ValueError(f"expected {dim * dim} [re, im] pairs, got array of shape {arr.shape}")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(dim, dim)

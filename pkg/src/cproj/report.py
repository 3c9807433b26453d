"""Deterministic JSON serialisation for command reports.

Floats are written with 17 significant digits, complex numbers (and complex
arrays, element-wise) as ``[re, im]`` pairs, and mappings in insertion order,
so identical inputs give byte-identical output.
"""

from __future__ import annotations

import json
import math
from typing import Any

import numpy as np

from .expr import ChartPoint

__all__ = ["dumps", "to_jsonable"]


def _float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    text = "%.17g" % x
    if "e" not in text and "." not in text and "n" not in text:
        text += ".0"
    return text


def to_jsonable(obj: Any) -> Any:
    """Convert numpy values, complex numbers and chart points to plain containers."""
    if isinstance(obj, ChartPoint):
        return [to_jsonable(obj.z1), to_jsonable(obj.z2)]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(x) for x in obj] if obj.ndim else to_jsonable(obj.item())
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real) + 0.0, float(obj.imag) + 0.0]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) + 0.0  # no negative zero
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    return obj


def _write(obj: Any, out: list[str], indent: int) -> None:
    pad = "  " * (indent + 1)
    if obj is None:
        out.append("null")
    elif obj is True or obj is False:
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for n, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(k, ensure_ascii=False) + ": ")
            _write(v, out, indent + 1)
            out.append(",\n" if n < len(obj) - 1 else "\n")
        out.append("  " * indent + "}")
    elif isinstance(obj, list):
        # numeric leaves stay on one line
        if all(not isinstance(x, (dict, list)) for x in obj) or all(
            isinstance(x, list) and all(not isinstance(y, (dict, list)) for y in x) for x in obj
        ):
            parts = []
            for x in obj:
                buf: list[str] = []
                _write(x, buf, indent + 1)
                parts.append("".join(buf))
            out.append("[" + ", ".join(parts) + "]")
            return
        out.append("[\n")
        for n, v in enumerate(obj):
            out.append(pad)
            _write(v, out, indent + 1)
            out.append(",\n" if n < len(obj) - 1 else "\n")
        out.append("  " * indent + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    out: list[str] = []
    _write(to_jsonable(obj), out, 0)
    return "".join(out) + "\n"

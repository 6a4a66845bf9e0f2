"""Deterministic serialisation helpers shared by the report writers."""

from __future__ import annotations

import enum
import json
import math
from pathlib import Path

import numpy as np

FLOAT_DIGITS = 12


def _clean(obj):
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{FLOAT_DIGITS}g}")
    if isinstance(obj, complex):
        return [_clean(obj.real), _clean(obj.imag)]
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj) -> str:
    """JSON text with floats rounded to 12 significant digits and a final newline."""
    return json.dumps(_clean(obj), indent=2) + "\n"


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(dumps_json(obj))
    return path


def fmt(value) -> str:
    """CSV cell text: 12 significant digits for floats, ``str`` otherwise."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{FLOAT_DIGITS}g}"
    return str(value)

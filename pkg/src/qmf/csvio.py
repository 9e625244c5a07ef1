"""CSV and JSON helpers shared by dataset and checkpoint serialization.

Floats are written with 17 significant digits so that float64 values
survive a write/read round trip bit-exactly. All files are UTF-8 with
LF line endings; JSON is written with sorted keys so byte output is a
pure function of content.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import FormatError


def format_float(x: float) -> str:
    return f"{x:.17g}"


def write_float_matrix(path: Path, array: np.ndarray, header: list[str] | None = None) -> None:
    a = np.asarray(array, dtype=np.float64)
    lines = []
    if header is not None:
        lines.append(",".join(header))
    for row in a:
        lines.append(",".join(format_float(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_float_matrix(path: Path, expected_shape: tuple[int, int] | None = None,
                      skip_header: bool = False) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    lines = [ln for ln in text.split("\n") if ln != ""]
    if skip_header:
        lines = lines[1:]
    if not lines:
        raise FormatError(f"{path} contains no data rows")
    rows = []
    width = None
    for i, ln in enumerate(lines):
        parts = ln.split(",")
        if width is None:
            width = len(parts)
        elif len(parts) != width:
            raise FormatError(f"{path}: row {i} has {len(parts)} fields, expected {width}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise FormatError(f"{path}: row {i} is not numeric: {e}") from e
    a = np.array(rows, dtype=np.float64)
    if expected_shape is not None and a.shape != tuple(expected_shape):
        raise FormatError(f"{path}: expected shape {tuple(expected_shape)}, got {a.shape}")
    return a


def write_int_column(path: Path, values: np.ndarray, header: str | None = None) -> None:
    lines = [] if header is None else [header]
    lines.extend(str(int(v)) for v in np.asarray(values))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def read_int_column(path: Path, expected_len: int | None = None,
                    skip_header: bool = False) -> np.ndarray:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    lines = [ln for ln in text.split("\n") if ln != ""]
    if skip_header:
        lines = lines[1:]
    try:
        values = np.array([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as e:
        raise FormatError(f"{path}: non-integer entry: {e}") from e
    if expected_len is not None and values.shape[0] != expected_len:
        raise FormatError(f"{path}: expected {expected_len} entries, got {values.shape[0]}")
    return values


def write_json(path: Path, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8", newline="\n")


def read_json(path: Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise FormatError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise FormatError(f"{path}: expected a JSON object at top level")
    return payload

"""Matrix CSV and JSON input/output with atomic writes."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Any

import numpy as np

from snapcorr.errors import InputError

FLOAT_FORMAT = "%.16e"
JSON_INDENT = "  "


# ---------------------------------------------------------------------------
# Atomic writes
# ---------------------------------------------------------------------------


def write_atomic(path: str, text: str) -> None:
    """Write *text* to *path* via a temp file in the same directory.

    The temp file is fsync'ed and moved into place with ``os.replace``,
    so readers never observe a partially written file.
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    fd = tempfile.NamedTemporaryFile(  # pylint: disable=consider-using-with
        mode="w", encoding="utf-8", newline="",
        dir=parent, delete=False, suffix=".tmp",
    )
    tmp_path = fd.name
    try:
        fd.write(text)
        fd.flush()
        os.fsync(fd.fileno())
        fd.close()
        os.replace(tmp_path, path)
    except BaseException:
        fd.close()
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# CSV matrices
# ---------------------------------------------------------------------------


def format_matrix(matrix: np.ndarray) -> str:
    """Format a 2-D array as header-less CSV with 17 significant digits."""
    arr = np.atleast_2d(np.asarray(matrix, dtype=float))
    buf = io.StringIO()
    np.savetxt(buf, arr, fmt=FLOAT_FORMAT, delimiter=",")
    return buf.getvalue()


def save_matrix_csv(path: str, matrix: np.ndarray) -> None:
    """Write *matrix* to *path* atomically."""
    write_atomic(path, format_matrix(matrix))


def read_rows(path: str) -> list[tuple[int, list[float]]]:
    """Read a header-less numeric CSV as ``(line_number, values)`` pairs.

    Blank lines are skipped. Raises ``InputError`` naming the line on
    any unparsable or non-finite entry.
    """
    rows: list[tuple[int, list[float]]] = []
    with open(path, encoding="utf-8", newline="") as f:
        for lineno, raw in enumerate(csv.reader(f), start=1):
            cells = [c.strip() for c in raw]
            if not cells or all(c == "" for c in cells):
                continue
            values: list[float] = []
            for c in cells:
                try:
                    value = float(c)
                except ValueError:
                    raise InputError(
                        f"{os.path.basename(path)}: not a number: {c!r}",
                        line=lineno,
                    ) from None
                if not math.isfinite(value):
                    raise InputError(
                        f"{os.path.basename(path)}: non-finite value {c!r}",
                        line=lineno,
                    )
                values.append(value)
            rows.append((lineno, values))
    return rows


def read_matrix_csv(path: str) -> np.ndarray:
    """Read a rectangular numeric CSV into a 2-D float array."""
    rows = read_rows(path)
    if not rows:
        raise InputError(f"{os.path.basename(path)}: file is empty")
    width = len(rows[0][1])
    for lineno, values in rows:
        if len(values) != width:
            raise InputError(
                f"{os.path.basename(path)}: expected {width} columns,"
                f" found {len(values)}",
                line=lineno,
            )
    return np.array([values for _, values in rows], dtype=float)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _encode(obj: Any, level: int) -> str:
    """JSON text for *obj*; floats use FLOAT_FORMAT, non-finite floats become null."""
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        return FLOAT_FORMAT % value if math.isfinite(value) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    pad = JSON_INDENT * (level + 1)
    end = JSON_INDENT * level
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {_encode(v, level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_json(obj: Any) -> str:
    """Serialize *obj* as indented JSON with every float in ``%.16e`` notation."""
    return _encode(obj, 0) + "\n"


def save_json(path: str, obj: Any) -> None:
    """Write *obj* as JSON to *path* atomically."""
    write_atomic(path, dumps_json(obj))


def load_json(path: str) -> Any:
    """Load a JSON file, turning decode errors into ``InputError``."""
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputError(
            f"{os.path.basename(path)}: invalid JSON: {e.msg}", line=e.lineno,
        ) from None

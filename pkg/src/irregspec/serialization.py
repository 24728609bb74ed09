"""CSV and JSON helpers with locale-free, round-trip exact number formatting."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CsvParseError

__version__ = "0.1.0"


def format_real(x) -> str:
    """17 significant digits, enough to round-trip any float64."""
    return format(float(x), ".17g")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and complex numbers for ``json``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": to_jsonable(obj.real), "im": to_jsonable(obj.imag)}
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return repr(x)
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed indentation)."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    text = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def provenance_line(config_sha: str = "", seed=None) -> str:
    return f"# irregspec {__version__} config_sha256={config_sha or 'none'} seed={seed}"


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comment: str = None) -> None:
    """Write rows with ``.``-decimal reals at 17 significant digits and ``\\n`` endings."""
    lines = []
    if comment:
        lines.append(comment)
    lines.append(",".join(header))
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_)):
                cells.append(str(int(v)))
            elif isinstance(v, str):
                cells.append(v)
            else:
                cells.append(format_real(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> tuple:
    """Read a numeric CSV, skipping ``#`` comment lines.

    Returns
    -------
    header : list of str
    data : ndarray, shape (rows, columns)

    Raises
    ------
    CsvParseError
        Naming the offending line number (1-based).
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CsvParseError(f"cannot read {path}: {exc}") from exc
    header = None
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            continue
        if len(cells) != len(header):
            raise CsvParseError(f"expected {len(header)} fields, found {len(cells)}", line=lineno)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvParseError(f"non-numeric field in {raw!r}", line=lineno) from None
    if header is None:
        raise CsvParseError(f"{path} has no header")
    return header, np.asarray(rows, dtype=float).reshape(-1, len(header))

"""
Moreau-W2 - Artifact I/O
Description: CSV/JSON reading and atomic writing of experiment artifacts
"""

import csv
import json
import os
import logging
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from moreau_w2.utils.errors import ArtifactIOError

logger = logging.getLogger(__name__)


def format_number(value: Any) -> str:
    """Shortest round-trip text for floats so reruns are byte-identical"""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def read_csv_table(path: Path) -> Tuple[List[str], np.ndarray]:
    """
    Read a numeric CSV with a header row.

    Args:
        path: CSV file path

    Returns:
        Header names and an (rows x columns) float matrix
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = [row for row in csv.reader(f) if row]
    except (OSError, UnicodeDecodeError) as e:
        raise ArtifactIOError(f"Cannot read {path}: {e}", path=str(path))

    if not rows:
        raise ArtifactIOError(f"{path} is empty", path=str(path))

    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    for line_no, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ArtifactIOError(
                f"{path}:{line_no} has {len(row)} fields, expected {len(header)}",
                path=str(path),
                line=line_no,
            )
    try:
        values = np.array([[float(v) for v in row] for row in body], dtype=float)
    except ValueError as e:
        raise ArtifactIOError(f"{path} contains a non-numeric field: {e}", path=str(path))

    return header, values.reshape(len(body), len(header))


def _atomic_write_text(path: Path, text: str):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise ArtifactIOError(f"Cannot write {path}: {e}", path=str(path))


def write_csv_table(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]):
    """Write a CSV atomically (temp file + rename) with deterministic number formatting"""
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ArtifactIOError(
                f"Row of length {len(row)} does not match header of length {len(header)}",
                path=str(path),
            )
        lines.append(",".join(format_number(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")
    logger.info(f"CSV written: {path} ({len(rows)} rows)")


def read_json(path_or_text: str) -> Dict[str, Any]:
    """Parse inline JSON text, or the contents of a JSON file"""
    text = str(path_or_text).strip()
    if not text.startswith("{"):
        try:
            with open(text, "r", encoding="utf-8") as f:
                text = f.read()
        except (OSError, UnicodeDecodeError) as e:
            raise ArtifactIOError(f"Cannot read {path_or_text}: {e}", path=str(path_or_text))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ArtifactIOError(f"Invalid JSON: {e}", source=str(path_or_text)[:200])
    if not isinstance(data, dict):
        raise ArtifactIOError("JSON document must be an object", source=str(path_or_text)[:200])
    return data


def write_json(path: Path, data: Dict[str, Any]):
    """Write JSON atomically"""
    _atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, default=_default) + "\n")
    logger.info(f"JSON written: {path}")


def _default(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    return str(value)

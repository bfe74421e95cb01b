"""Deterministic on-disk formats: delimited tables with versioned comment
headers, JSON solver records, and config loading with content hashing.

Outputs carry no timestamps or machine identifiers, so rerunning the same
configuration reproduces files byte for byte. Floats are written with
shortest round-trip precision (%.17g) and read back exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import yaml

TABLE_FORMAT_VERSION = 1
RECORD_SCHEMA_VERSION = 1


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"config {path} must be a mapping")
    return cfg


def config_hash(cfg: dict) -> str:
    """Stable 12-hex digest of a config mapping (order-insensitive)."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True, default=_json_default)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_table(path, columns, rows, meta: dict | None = None) -> None:
    """Tab-separated table with a '#'-comment header; fully deterministic."""
    path = Path(path)
    lines = [f"# dickeising table v{TABLE_FORMAT_VERSION}"]
    for key in sorted((meta or {})):
        lines.append(f"# {key} = {(meta or {})[key]}")
    lines.append("# columns: " + "\t".join(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match column count")
        lines.append("\t".join(_fmt(x) for x in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_table(path) -> tuple[dict, list[str], np.ndarray]:
    """Returns (meta, column names, data array); inverse of write_table."""
    meta: dict = {}
    columns: list[str] = []
    data = []
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
        if not first.startswith("# dickeising table v"):
            raise ValueError(f"{path} is not a table file")
        version = int(first.rsplit("v", 1)[1])
        if version != TABLE_FORMAT_VERSION:
            raise ValueError(f"unsupported table version {version}")
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# columns: "):
                columns = line[len("# columns: "):].split("\t")
            elif line.startswith("# "):
                key, _, val = line[2:].partition(" = ")
                meta[key] = val
            elif line:
                data.append([float(x) for x in line.split("\t")])
    if not columns:
        raise ValueError(f"{path} has no column header")
    arr = np.array(data, dtype=float) if data else np.empty((0, len(columns)))
    return meta, columns, arr


def write_solver_record(path, payload: dict) -> None:
    """JSON record of one solver run; schema-versioned, keys sorted."""
    doc = {"schema_version": RECORD_SCHEMA_VERSION}
    doc.update(payload)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=1,
                               default=_json_default) + "\n", encoding="utf-8")


def read_solver_record(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("schema_version")
    if version != RECORD_SCHEMA_VERSION:
        raise ValueError(f"unsupported record schema version {version}")
    return doc


def write_trajectory_table(path, record, meta: dict | None = None) -> None:
    """One stochastic trajectory on the record grid (columns fixed)."""
    from .dynamics import TRAJECTORY_COLUMNS
    table = record.as_table()
    full_meta = {
        "dt": _fmt(record.dt), "kappa": _fmt(record.kappa),
        "seed": "" if record.seed is None else str(record.seed),
        "error_estimate": _fmt(record.error_estimate),
        "max_bond": str(record.max_bond),
    }
    full_meta.update(meta or {})
    write_table(path, list(TRAJECTORY_COLUMNS), table.tolist(), full_meta)

"""Deterministic CSV/JSON output and run manifests."""

import csv
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from . import __version__
from ._accel import backend_name


class OutputError(ValueError):
    """A table or report holds values that cannot be written faithfully."""


def _fmt(v):
    return format(float(v), ".17g")


def emit_csv(table, path, columns=None, meta=None):
    """Write columns of equal length as CSV with 17 significant digits.

    Parameters
    ----------
    table : dict of str -> array_like
        Column name to values; insertion order is the column order unless
        ``columns`` is given.
    path : str
    columns : sequence of str, optional
    meta : dict, optional
        Written as ``# key = value`` lines above the column header.

    Raises
    ------
    OutputError
        Non-finite values or ragged columns.
    """
    columns = list(table) if columns is None else list(columns)
    data = [np.atleast_1d(np.asarray(table[c], dtype=float)) for c in columns]
    n = data[0].size if data else 0
    for c, d in zip(columns, data):
        if d.size != n:
            raise OutputError(f"column {c!r} has {d.size} rows, expected {n}")
        if not np.all(np.isfinite(d)):
            raise OutputError(f"column {c!r} holds non-finite values")
    with open(path, "w", newline="", encoding="ascii") as fh:
        for k, v in (meta or {}).items():
            fh.write(f"# {k} = {_fmt(v) if isinstance(v, (float, np.floating)) else v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for i in range(n):
            w.writerow([_fmt(d[i]) for d in data])


def read_csv(path):
    """Read a file written by :func:`emit_csv`.

    Returns
    -------
    table : dict of str -> ndarray
    meta : dict of str -> str
        The ``# key = value`` header entries.
    """
    meta = {}
    lines = []
    with open(path, newline="", encoding="ascii") as fh:
        for line in fh:
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
            elif line.strip():
                lines.append(line)
    rows = list(csv.reader(lines))
    if not rows:
        raise OutputError(f"{path}: no column header")
    head, body = rows[0], rows[1:]
    for i, r in enumerate(body, 2):
        if len(r) != len(head):
            raise OutputError(f"{path}: data row {i} has {len(r)} fields, expected {len(head)}")
    cols = np.array([[float(u) for u in r] for r in body], dtype=float).reshape(len(body), len(head))
    return {h: cols[:, i] for i, h in enumerate(head)}, meta


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if not math.isfinite(v):
            raise OutputError(f"non-finite value {v!r} in report")
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_json(report, path):
    """Write a report (dict or object with ``to_dict``) with sorted keys."""
    data = report.to_dict() if hasattr(report, "to_dict") else report
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_plain(data), fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI run."""

    subcommand: str
    config_path: str
    config_hash: str
    overrides: Dict[str, str]
    outputs: List[str] = field(default_factory=list)
    integrator: Dict[str, object] = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__
    backend: str = field(default_factory=backend_name)
    threads: int = 1
    python: str = field(default_factory=platform.python_version)
    started: str = field(default_factory=lambda: time.strftime("%Y-%m-%dT%H:%M:%S%z"))

    def to_dict(self):
        return asdict(self)

    def write(self, out_dir):
        path = os.path.join(out_dir, "manifest.json")
        emit_json(self, path)
        return path


def load_manifest(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)

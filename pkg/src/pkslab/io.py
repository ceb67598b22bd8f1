"""CSV/JSON serialization of densities, time series and profiles."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .density import RadialDensity
from .grid import RadialGrid

DENSITY_COLUMNS = ("r_node", "rho", "cum_mass")


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return repr(float(x))


def density_header(rho: RadialDensity, m: float | None = None) -> dict:
    return {"d": rho.d, "m": 1.0 if m is None else float(m), "M": rho.mass, "R_max": rho.grid.R_max,
            "grid": rho.grid.spec, "tail_mass": rho.tail_mass}


def write_density_csv(path, rho: RadialDensity, m: float | None = None) -> tuple[Path, Path]:
    """One row per node: r_node, rho on the shell starting there (0 on the last node), cum_mass.

    A JSON header with d, m, M, R_max and the grid spec goes next to it.
    """
    path = Path(path)
    vals = np.append(rho.rho, 0.0)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DENSITY_COLUMNS)
        for r, v, c in zip(rho.grid.nodes, vals, rho.cum_mass):
            w.writerow((_fmt(r), _fmt(v), _fmt(c)))
    head = path.with_suffix(".json")
    write_json(head, density_header(rho, m))
    return path, head


def read_density_csv(path, d: int | None = None) -> RadialDensity:
    path = Path(path)
    head = path.with_suffix(".json")
    meta = json.loads(head.read_text()) if head.exists() else {}
    d = int(meta.get("d", 2)) if d is None else d
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(DENSITY_COLUMNS) - set(rows[0]):
        raise ValueError(f"{path}: expected columns {DENSITY_COLUMNS}")
    nodes = np.array([float(r["r_node"]) for r in rows])
    rho = np.array([float(r["rho"]) for r in rows])[:-1]
    grid = RadialGrid(nodes, d, meta.get("grid", {"kind": "csv"}))
    return RadialDensity(grid, rho, float(meta.get("tail_mass", 0.0)))


def write_series_csv(path, series: Mapping[str, Iterable], columns: Iterable[str] | None = None) -> Path:
    path = Path(path)
    cols = list(columns) if columns is not None else list(series)
    data = [np.asarray(series[c]) for c in cols]
    n = len(data[0]) if data else 0
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(n):
            w.writerow([_fmt(col[i]) for col in data])
    return path


def write_rows_csv(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    cols = columns or (list(rows[0]) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in rows:
            w.writerow([_fmt(row.get(c)) if not isinstance(row.get(c), str) else row[c] for c in cols])
    return path


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _finite(o):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(o, dict):
        return {str(k): _finite(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_finite(v) for v in o]
    if isinstance(o, (float, np.floating)) and not np.isfinite(o):
        return "inf" if o > 0 else ("-inf" if o < 0 else "nan")
    return o


def to_json(obj) -> str:
    return json.dumps(_finite(json.loads(json.dumps(obj, default=_default))), indent=2, sort_keys=True)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(to_json(obj) + "\n")
    return path


def append_json_lines(path, records: Iterable[dict]) -> Path:
    path = Path(path)
    with path.open("a") as fh:
        for rec in records:
            fh.write(json.dumps(_finite(json.loads(json.dumps(rec, default=_default))), sort_keys=True) + "\n")
    return path

"""CSV, JSON and YAML readers and writers.

Panels are written as bare numeric matrices with empty fields for missing
cells. Graphs are read either as an ``i,j,weight`` edge list (with that
header) or as a dense adjacency matrix.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError, ValidationError
from .graph import Graph, ingest_geographic


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return "" if math.isnan(x) else repr(x)
    return str(x)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            # a row of empty fields is a fully missing panel row; only blank lines are skipped
            rows = [row for row in csv.reader(fh) if row]
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    if not rows:
        raise ValidationError(f"{path} is empty")
    return rows


def _float(field: str, path, line: int) -> float:
    field = field.strip()
    if field == "":
        return float("nan")
    try:
        return float(field)
    except ValueError:
        raise ValidationError(f"{path}:{line}: not a number: {field!r}") from None


def read_panel(path) -> np.ndarray:
    """Numeric matrix; empty fields become NaN (missing)."""
    rows = _read_rows(path)
    width = len(rows[0])
    out = []
    for k, row in enumerate(rows, 1):
        if len(row) != width:
            raise ValidationError(f"{path}:{k}: expected {width} fields, got {len(row)}")
        out.append([_float(f, path, k) for f in row])
    Y = np.asarray(out, dtype=float)
    if np.any(np.isinf(Y)):
        raise ValidationError(f"{path}: infinite values are not allowed")
    return Y


def write_panel(path, Y) -> Path:
    return write_csv(path, None, np.asarray(Y, dtype=float).tolist())


def read_graph(path, n: int | None = None) -> Graph:
    """Edge list with header ``i,j,weight`` (0-based nodes) or a dense adjacency matrix."""
    rows = _read_rows(path)
    head = [f.strip().lower() for f in rows[0]]
    if head == ["i", "j", "weight"]:
        edges = []
        for k, row in enumerate(rows[1:], 2):
            if len(row) != 3:
                raise ValidationError(f"{path}:{k}: expected i,j,weight")
            try:
                i, j = int(row[0]), int(row[1])
            except ValueError:
                raise ValidationError(f"{path}:{k}: node ids must be integers") from None
            edges.append((i, j, _float(row[2], path, k)))
        if not edges:
            raise ValidationError(f"{path}: no edges")
        size = max(max(i, j) for i, j, _ in edges) + 1
        return Graph.from_edges(edges, n if n is not None else size)
    W = read_panel(path)
    if np.any(np.isnan(W)):
        raise ValidationError(f"{path}: adjacency matrix has empty fields")
    return Graph(W)


def write_edges(path, g: Graph) -> Path:
    return write_csv(path, ["i", "j", "weight"], g.edge_list())


def read_coords(path):
    """``id,lat,lon`` rows; returns ``(ids, lat, lon)``."""
    rows = _read_rows(path)
    head = [f.strip().lower() for f in rows[0]]
    if head != ["id", "lat", "lon"]:
        raise ValidationError(f"{path}: expected header id,lat,lon")
    ids, lat, lon = [], [], []
    for k, row in enumerate(rows[1:], 2):
        if len(row) != 3:
            raise ValidationError(f"{path}:{k}: expected id,lat,lon")
        ids.append(row[0].strip())
        lat.append(_float(row[1], path, k))
        lon.append(_float(row[2], path, k))
    if len(set(ids)) != len(ids):
        raise ValidationError(f"{path}: duplicate station ids")
    return ids, np.asarray(lat), np.asarray(lon)


def write_coords(path, lat, lon, ids=None) -> Path:
    ids = ids if ids is not None else range(len(lat))
    return write_csv(path, ["id", "lat", "lon"], zip(ids, lat, lon))


def graph_from_coords(path, percentile: float = 70.0) -> Graph:
    _, lat, lon = read_coords(path)
    return ingest_geographic(lat, lon, percentile)


def write_spectrum(path, eigenvalues) -> Path:
    return write_csv(path, ["index", "eigenvalue"], enumerate(np.asarray(eigenvalues, dtype=float)))


def write_coefficients(path, C) -> Path:
    C = np.asarray(C, dtype=float)
    return write_csv(path, ["i", "j", "value"], ((i, j, C[i, j]) for i in range(C.shape[0]) for j in range(C.shape[1])))


def read_coefficients(path) -> np.ndarray:
    rows = _read_rows(path)
    if [f.strip().lower() for f in rows[0]] != ["i", "j", "value"]:
        raise ValidationError(f"{path}: expected header i,j,value")
    trip = [(int(r[0]), int(r[1]), _float(r[2], path, k)) for k, r in enumerate(rows[1:], 2)]
    n = max(t[0] for t in trip) + 1
    T = max(t[1] for t in trip) + 1
    C = np.full((n, T), np.nan)
    for i, j, v in trip:
        C[i, j] = v
    return C


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def read_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def write_yaml(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        yaml.safe_dump(data, fh, sort_keys=True, default_flow_style=False)
    return path

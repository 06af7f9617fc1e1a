"""File formats and atomic writes.

* measures: CSV ``position,weight`` or JSON ``{"kind", "atoms": [[v, w], ...]}``
  (grid measures also carry ``"grid": {"v_min", "v_max", "m"}``); floats are
  written with 17 significant digits so reading back is bit-exact.
* time series: CSV with a header row.
* reports: JSON; an infinite value is written as ``{"infinite": "+inf"}``
  (or ``"-inf"``) so the files stay strict JSON.
* fluxes: ``fluxes.bin``, little-endian, header ``b"GFLX"``, ``uint32``
  version (1), ``uint32`` interval count ``K``, ``uint32`` node count ``m``,
  then ``K * m * (m - 1) / 2`` ``float64`` values: for each interval the
  strict upper triangle of the flux in row-major order.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .measures import EMPIRICAL, GRID, DiscreteMeasure, GridSpec, empirical, on_grid

FLUX_MAGIC = b"GFLX"
FLUX_VERSION = 1
_FLUX_HEADER = struct.Struct("<4sIII")


def fmt(x) -> str:
    return "%.17g" % x


# --------------------------------------------------------------------------
# atomic writes


def atomic_write_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_text(path, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


# --------------------------------------------------------------------------
# JSON


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and infinities to strict JSON values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return {"infinite": "+inf" if x > 0 else "-inf"}
        if math.isnan(x):
            raise ValueError("NaN cannot be written to a report")
        return x
    if isinstance(obj, Path):
        return str(obj)
    return obj


def from_jsonable(obj):
    """Inverse of :func:`to_jsonable` for the infinity flag."""
    if isinstance(obj, dict):
        if set(obj) == {"infinite"} and obj["infinite"] in ("+inf", "-inf"):
            return math.inf if obj["infinite"] == "+inf" else -math.inf
        return {k: from_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [from_jsonable(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write_text(path, dumps(obj))


def read_json(path):
    return from_jsonable(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# measures


def measure_to_csv(f: DiscreteMeasure) -> str:
    lines = ["position,weight"]
    lines += [f"{fmt(v)},{fmt(w)}" for v, w in zip(f.positions, f.weights)]
    return "\n".join(lines) + "\n"


def measure_to_json(f: DiscreteMeasure) -> str:
    doc = {"kind": f.kind}
    if f.kind == GRID:
        doc["grid"] = {"v_min": f.grid.v_min, "v_max": f.grid.v_max, "m": f.grid.m}
    # atoms are formatted by hand so every float keeps 17 significant digits
    atoms = ",\n    ".join(f"[{fmt(v)}, {fmt(w)}]" for v, w in zip(f.positions, f.weights))
    head = json.dumps(doc)[:-1]
    return f'{head}, "atoms": [\n    {atoms}\n]}}\n'


def write_measure(path, f: DiscreteMeasure) -> Path:
    path = Path(path)
    text = measure_to_json(f) if path.suffix == ".json" else measure_to_csv(f)
    return atomic_write_text(path, text)


def read_measure(path, grid: GridSpec | None = None) -> DiscreteMeasure:
    """Read a CSV or JSON measure; with ``grid`` the atoms are placed on its nodes."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict) or "atoms" not in doc:
            raise ValueError(f"{path}: measure JSON needs an 'atoms' list")
        atoms = np.array(doc["atoms"], dtype=float).reshape(-1, 2)
        kind = doc.get("kind", EMPIRICAL)
        if kind == GRID:
            g = doc.get("grid")
            if not isinstance(g, dict):
                raise ValueError(f"{path}: grid measure needs a 'grid' entry")
            spec = GridSpec(float(g["v_min"]), float(g["v_max"]), int(g["m"]))
            f = on_grid(atoms[:, 1], spec)
            if not np.array_equal(f.positions, atoms[:, 0]):
                raise ValueError(f"{path}: atom positions differ from the declared grid")
        else:
            f = DiscreteMeasure(atoms[:, 0], atoms[:, 1])
    else:
        rows = list(csv.reader(_io.StringIO(path.read_text())))
        if not rows or [c.strip() for c in rows[0]] != ["position", "weight"]:
            raise ValueError(f"{path}: CSV header must be 'position,weight'")
        data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float).reshape(-1, 2)
        f = empirical(data[:, 0], data[:, 1])
    if grid is not None:
        from .measures import to_grid

        f = to_grid(f, grid)
    return f


# --------------------------------------------------------------------------
# tables


def table_to_csv(columns: dict) -> str:
    names = list(columns)
    cols = [np.asarray(columns[k], dtype=float) for k in names]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def write_table(path, columns: dict) -> Path:
    return atomic_write_text(path, table_to_csv(columns))


def read_table(path) -> dict:
    rows = list(csv.reader(_io.StringIO(Path(path).read_text())))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    names = rows[0]
    data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(names))
    return {k: data[:, i] for i, k in enumerate(names)}


DIAGNOSTIC_COLUMNS = ("t", "energy", "dissipation", "action", "interaction_energy")


def write_diagnostics(path, times, diagnostics: dict) -> Path:
    cols = {"t": times}
    for k in DIAGNOSTIC_COLUMNS[1:]:
        cols[k] = diagnostics[k]
    return write_table(path, cols)


def write_trajectory(path, times, velocities) -> Path:
    vel = np.asarray(velocities)
    cols = {"t": times}
    for i in range(vel.shape[1]):
        cols[f"v_{i + 1}"] = vel[:, i]
    return write_table(path, cols)


# --------------------------------------------------------------------------
# fluxes


def fluxes_to_bytes(uppers, m: int) -> bytes:
    uppers = [np.asarray(u, dtype="<f8") for u in uppers]
    size = m * (m - 1) // 2
    for u in uppers:
        if u.shape != (size,):
            raise ValueError("flux length does not match m")
    header = _FLUX_HEADER.pack(FLUX_MAGIC, FLUX_VERSION, len(uppers), m)
    body = np.concatenate(uppers).astype("<f8").tobytes() if uppers else b""
    return header + body


def write_fluxes(path, uppers, m: int) -> Path:
    return atomic_write_bytes(path, fluxes_to_bytes(uppers, m))


def read_fluxes(path) -> np.ndarray:
    """Return an array of shape ``(K, m (m - 1) / 2)``."""
    data = Path(path).read_bytes()
    if len(data) < _FLUX_HEADER.size:
        raise ValueError(f"{path}: truncated flux file")
    magic, version, K, m = _FLUX_HEADER.unpack_from(data)
    if magic != FLUX_MAGIC or version != FLUX_VERSION:
        raise ValueError(f"{path}: not a version-{FLUX_VERSION} flux file")
    size = m * (m - 1) // 2
    body = data[_FLUX_HEADER.size :]
    if len(body) != 8 * K * size:
        raise ValueError(f"{path}: flux file length does not match its header")
    return np.frombuffer(body, dtype="<f8").reshape(K, size).copy()


# --------------------------------------------------------------------------
# validation of run directories


def validate_dir(path) -> list[str]:
    """Re-parse every output file under ``path``; returns a list of problems."""
    from .report import SCHEMA_VERSION

    problems = []
    for p in sorted(Path(path).rglob("*")):
        if not p.is_file() or p.name.startswith("."):
            continue
        try:
            if p.suffix == ".csv":
                if p.read_text().startswith("position,weight"):
                    read_measure(p)
                else:
                    tab = read_table(p)
                    if "t" in tab and np.any(np.diff(tab["t"]) <= 0):
                        problems.append(f"{p}: time column not increasing")
            elif p.suffix == ".json":
                doc = read_json(p)
                if p.name in ("report.json", "ensemble.json"):
                    if doc.get("schema_version") != SCHEMA_VERSION:
                        problems.append(f"{p}: missing or wrong schema_version")
                    for name, chk in doc.get("checks", {}).items():
                        if not {"status", "value", "tolerance"} <= set(chk):
                            problems.append(f"{p}: check {name} lacks status/value/tolerance")
            elif p.suffix == ".bin":
                read_fluxes(p)
        except (ValueError, KeyError, json.JSONDecodeError) as err:
            problems.append(f"{p}: {err}")
    return problems

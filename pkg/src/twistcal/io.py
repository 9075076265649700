"""File formats: binary field dumps, CSV exports, slab series and manifests.

A field dump is ``b"CFL1"``, two little-endian ``u32`` sizes, the side length
as ``f64``, then the row-major ``float64`` values.  A slab is a directory of
dumps plus ``times.csv`` mapping each index to its time and file name.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch
from .geometry import TorusGrid
from .spacetime import SpaceTimeField

MAGIC = b"CFL1"
_HEADER = struct.Struct("<4sIId")


def atomic_write_bytes(path, data: bytes):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def field_bytes(values: np.ndarray, length: float = 1.0) -> bytes:
    values = np.asarray(values, dtype="<f8")
    if values.ndim != 2:
        raise ShapeMismatch(f"a field dump holds one 2-d field, got shape {values.shape}")
    ny, nx = values.shape
    return _HEADER.pack(MAGIC, nx, ny, float(length)) + np.ascontiguousarray(values).tobytes()


def write_field(path, values: np.ndarray, length: float = 1.0):
    atomic_write_bytes(path, field_bytes(values, length))


def read_field(path) -> tuple[np.ndarray, float]:
    """Return ``(values, length)``."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, nx, ny, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(ny, nx).astype(float), length


def write_field_csv(path, values: np.ndarray, grid: TorusGrid):
    X, Y = grid.coords()
    lines = ["x,y,value"]
    for x, y, v in zip(X.ravel(), Y.ravel(), np.asarray(values).ravel()):
        lines.append(f"{float(x)!r},{float(y)!r},{float(v)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_series(directory, field: SpaceTimeField, prefix: str = "field"):
    """Dump every slice of ``field`` and a ``times.csv`` sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = ["index,t,file"]
    for i, (t, v) in enumerate(zip(field.times, field.values)):
        name = f"{prefix}_{i:05d}.cfl"
        write_field(directory / name, v, field.grid.length)
        rows.append(f"{i},{float(t)!r},{name}")
    atomic_write_text(directory / "times.csv", "\n".join(rows) + "\n")


def read_series(directory) -> SpaceTimeField:
    directory = Path(directory)
    times, values = [], []
    length = 1.0
    with open(directory / "times.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            v, length = read_field(directory / row["file"])
            times.append(float(row["t"]))
            values.append(v)
    if not values:
        raise ValueError(f"{directory}: empty series")
    grid = TorusGrid(values[0].shape[-1], length)
    return SpaceTimeField(grid, np.array(times), np.stack(values))


def field_hash(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()


def export_approx(directory, approx) -> dict:
    """Write ``phi0`` and each corrector as series plus ``manifest.json``."""
    directory = Path(directory)
    write_series(directory / "phi0", approx.phi0_field(), "phi0")
    for j, u in enumerate(approx.u, start=1):
        write_series(directory / f"u{j}", SpaceTimeField(approx.grid, approx.times, u), f"u{j}")
    manifest = {"N": approx.N, "T": approx.T, "dt": approx.dt, "psi0_hash": field_hash(approx.phi0[0])}
    write_json(directory / "manifest.json", manifest)
    return manifest

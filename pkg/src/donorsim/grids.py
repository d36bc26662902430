"""CSV tables and a compact binary format for 2D gridded fields.

CSV: ``#`` comment lines (free text, then one line of ``name [unit]``
column labels), followed by comma-separated rows at 9 significant digits.

Binary grid (little-endian):

==========  =====================================================
bytes       content
==========  =====================================================
8           magic ``b"DSGRID01"``
3 x uint32  nx, ny, number of components
16          dx, dy as float64 (0 when the axis is non-uniform)
nx float64  x coordinates (m)
ny float64  y coordinates (m)
32 x ncomp  component names, ASCII, NUL padded
rest        components in order, each nx*ny float64, row-major (x slow)
==========  =====================================================
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"DSGRID01"
NAME_BYTES = 32
FMT = "%.9g"


def write_csv(path, columns: dict[str, tuple[np.ndarray, str]], comments: list[str] | None = None) -> Path:
    """Write equal-length columns given as ``{name: (values, unit)}``."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n][0], float).ravel() for n in names]
    if len({len(d) for d in data}) > 1:
        raise ValueError("CSV columns must have equal length")
    header = list(comments or []) + [", ".join(f"{n} [{columns[n][1]}]" for n in names)]
    table = np.column_stack(data) if data else np.empty((0, 0))
    with open(path, "w", newline="\n") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        np.savetxt(fh, table, fmt=FMT, delimiter=",")
    return path


def read_csv(path) -> dict[str, np.ndarray]:
    """Columns of a file written by :func:`write_csv`, keyed by name."""
    labels = None
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            labels = line[1:].strip()
    if labels is None:
        raise ValueError(f"{path}: missing column header")
    names = [lab.split(" [")[0].strip() for lab in labels.split(", ")]
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.size == 0:
        return {n: np.empty(0) for n in names}
    return {n: data[:, i] for i, n in enumerate(names)}


def grid_columns(x: np.ndarray, y: np.ndarray, fields: dict[str, tuple[np.ndarray, str]],
                 x_unit: tuple[float, str] = (1e-6, "um"), y_unit: tuple[float, str] = (1e-9, "nm")):
    """Flatten (nx, ny) fields into CSV columns with x varying slowest."""
    X, Y = np.meshgrid(x, y, indexing="ij")
    cols = {"x": (X.ravel() / x_unit[0], x_unit[1]), "y": (Y.ravel() / y_unit[0], y_unit[1])}
    for name, (arr, unit) in fields.items():
        a = np.asarray(arr, float)
        if a.shape != X.shape:
            raise ValueError(f"field {name!r} has shape {a.shape}, grid is {X.shape}")
        cols[name] = (a.ravel(), unit)
    return cols


def _spacing(v: np.ndarray) -> float:
    if len(v) < 2:
        return 0.0
    d = np.diff(v)
    return float(d[0]) if np.allclose(d, d[0], rtol=1e-9, atol=0) else 0.0


@dataclass(frozen=True)
class Grid:
    x: np.ndarray
    y: np.ndarray
    fields: dict[str, np.ndarray]


def write_grid(path, x: np.ndarray, y: np.ndarray, fields: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    x = np.ascontiguousarray(x, "<f8")
    y = np.ascontiguousarray(y, "<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3I", len(x), len(y), len(fields)))
        fh.write(struct.pack("<2d", _spacing(x), _spacing(y)))
        fh.write(x.tobytes())
        fh.write(y.tobytes())
        for name in fields:
            raw = name.encode("ascii")
            if len(raw) > NAME_BYTES:
                raise ValueError(f"component name {name!r} longer than {NAME_BYTES} bytes")
            fh.write(raw.ljust(NAME_BYTES, b"\0"))
        for name, arr in fields.items():
            a = np.ascontiguousarray(arr, "<f8")
            if a.shape != (len(x), len(y)):
                raise ValueError(f"component {name!r} has shape {a.shape}")
            fh.write(a.tobytes())
    return path


def read_grid(path) -> Grid:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ValueError(f"{path}: not a grid file")
    nx, ny, nc = struct.unpack_from("<3I", buf, 8)
    off = 8 + 12 + 16
    x = np.frombuffer(buf, "<f8", nx, off).copy()
    off += 8 * nx
    y = np.frombuffer(buf, "<f8", ny, off).copy()
    off += 8 * ny
    names = []
    for _ in range(nc):
        names.append(buf[off:off + NAME_BYTES].rstrip(b"\0").decode("ascii"))
        off += NAME_BYTES
    fields = {}
    for n in names:
        fields[n] = np.frombuffer(buf, "<f8", nx * ny, off).reshape(nx, ny).copy()
        off += 8 * nx * ny
    if off != len(buf):
        raise ValueError(f"{path}: trailing or missing bytes")
    return Grid(x=x, y=y, fields=fields)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

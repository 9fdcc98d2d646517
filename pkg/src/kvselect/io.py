"""Readers and writers for the on-disk formats.

Binary matrices (features, depth maps) share one layout::

    b"GTHF" | u32 version = 1 | u32 n_rows | u32 n_cols | n_rows*n_cols f32, all little-endian

CSV inputs are UTF-8 with a header line. Every reader reports the file and
1-based line number of the first problem it finds.
"""

from __future__ import annotations

import csv
import io as _io
import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import DimensionError, FormatError

MAGIC = b"GTHF"
VERSION = 1
_HEADER = struct.Struct("<4sIII")

TRAJECTORY_COLUMNS = ["idx"] + [f"r{i}{j}" for i in range(3) for j in range(3)] + ["tx", "ty", "tz"]


def read_binary_matrix(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("file too short for GTHF header", path)
    magic, version, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", path)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", path)
    expected = _HEADER.size + 4 * rows * cols
    if len(data) != expected:
        raise DimensionError(f"payload holds {len(data) - _HEADER.size} bytes, header implies {4 * rows * cols}", path)
    values = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    return values.reshape(rows, cols)


def write_binary_matrix(path, values) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    rows, cols = values.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, rows, cols))
        fh.write(np.ascontiguousarray(values).tobytes())


def is_binary_matrix(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(4) == MAGIC


def _read_rows(path):
    """Yield ``(line_number, fields)`` for every non-header line."""
    text = Path(path).read_text(encoding="utf-8")
    if not text.strip():
        raise FormatError("empty file", path)
    reader = csv.reader(_io.StringIO(text))
    header = next(reader)
    rows = []
    for lineno, fields in enumerate(reader, start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        rows.append((lineno, [f.strip() for f in fields]))
    return [h.strip() for h in header], rows


def _parse_float(token, path, lineno) -> float:
    try:
        value = float(token)
    except ValueError:
        raise FormatError(f"cannot parse {token!r} as a number", path, lineno) from None
    return value


def _parse_table(path, header, rows, width) -> np.ndarray:
    out = np.empty((len(rows), width))
    for r, (lineno, fields) in enumerate(rows):
        if len(fields) != width:
            raise DimensionError(f"expected {width} fields, found {len(fields)}", path, lineno)
        for c, token in enumerate(fields):
            out[r, c] = _parse_float(token, path, lineno)
        if not np.all(np.isfinite(out[r])):
            raise ValueError(f"{path}:{lineno}: non-finite value")
    return out


def read_feature_csv(path) -> np.ndarray:
    header, rows = _read_rows(path)
    dim = len(header) - 1
    expected = ["frame_id"] + [f"f{i}" for i in range(dim)]
    if dim < 1 or header != expected:
        raise FormatError("header must be 'frame_id,f0,...,f{d-1}'", path, 1)
    if not rows:
        raise FormatError("no data rows", path)
    table = _parse_table(path, header, rows, dim + 1)
    ids = table[:, 0]
    if not np.array_equal(ids, np.arange(len(rows))):
        bad = int(np.flatnonzero(ids != np.arange(len(rows)))[0])
        raise FormatError(f"frame_id must run 0..N-1 in order, found {ids[bad]:g}", path, rows[bad][0])
    return table[:, 1:]


def write_feature_csv(path, features) -> None:
    features = np.asarray(features, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(["frame_id"] + [f"f{i}" for i in range(features.shape[1])]) + "\n")
        for i, row in enumerate(features):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    """Headered numeric grid (depth maps, score tables). The header is checked for width only."""
    header, rows = _read_rows(path)
    if not rows:
        raise FormatError("no data rows", path)
    out = np.empty((len(rows), len(header)))
    for r, (lineno, fields) in enumerate(rows):
        if len(fields) != len(header):
            raise DimensionError(f"expected {len(header)} fields, found {len(fields)}", path, lineno)
        out[r] = [_parse_float(t, path, lineno) for t in fields]
    return out


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(rotations (N,3,3), translations (N,3))``."""
    header, rows = _read_rows(path)
    if header != TRAJECTORY_COLUMNS:
        raise FormatError("header must be 'idx,r00,...,r22,tx,ty,tz'", path, 1)
    if not rows:
        raise FormatError("no data rows", path)
    table = _parse_table(path, header, rows, len(TRAJECTORY_COLUMNS))
    return table[:, 1:10].reshape(-1, 3, 3), table[:, 10:13].copy()


def write_trajectory_csv(path, rotations, translations) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TRAJECTORY_COLUMNS) + "\n")
        for i, (R, t) in enumerate(zip(rotations, translations)):
            vals = [repr(float(v)) for v in np.ravel(R)] + [repr(float(v)) for v in t]
            fh.write(",".join([str(i)] + vals) + "\n")


def read_cloud_csv(path) -> tuple[np.ndarray, np.ndarray | None]:
    """Return ``(points (M,3), normals (M,3) or None)``."""
    header, rows = _read_rows(path)
    if header not in (["x", "y", "z"], ["x", "y", "z", "nx", "ny", "nz"]):
        raise FormatError("header must be 'x,y,z' or 'x,y,z,nx,ny,nz'", path, 1)
    if not rows:
        raise FormatError("no data rows", path)
    table = _parse_table(path, header, rows, len(header))
    normals = table[:, 3:6].copy() if len(header) == 6 else None
    return table[:, :3].copy(), normals


def write_cloud_csv(path, points, normals=None) -> None:
    points = np.asarray(points, dtype=np.float64)
    cols = ["x", "y", "z"] + (["nx", "ny", "nz"] if normals is not None else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for i, p in enumerate(points):
            vals = list(p) + (list(normals[i]) if normals is not None else [])
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def read_depth(path) -> np.ndarray:
    if is_binary_matrix(path):
        return read_binary_matrix(path)
    return read_matrix_csv(path)


def dumps_json(obj) -> str:
    """Canonical JSON used for every machine-readable report."""
    return json.dumps(obj, indent=2) + "\n"

"""Per-frame descriptors and the covisibility / distance matrices built from them."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.utils.validation import check_array

from . import io as kio
from .exceptions import ArgumentError, FormatError


def check_features(F) -> np.ndarray:
    """Validate an ``(n_frames, dim)`` descriptor matrix and return it as float64."""
    F = check_array(F, dtype=np.float64, ensure_all_finite=True)
    return F


def load_features(path, format: str | None = None) -> np.ndarray:
    """Read a feature matrix from a ``csv`` or ``binary`` (GTHF) file.

    With ``format=None`` the binary layout is detected from its magic bytes.
    """
    path = Path(path)
    if format is None:
        format = "binary" if path.stat().st_size >= 4 and kio.is_binary_matrix(path) else "csv"
    if format == "csv":
        F = kio.read_feature_csv(path)
    elif format == "binary":
        F = kio.read_binary_matrix(path)
        if F.shape[0] == 0 or F.shape[1] == 0:
            raise FormatError("binary feature file holds no values", path)
        if not np.all(np.isfinite(F)):
            bad = int(np.flatnonzero(~np.all(np.isfinite(F), axis=1))[0])
            raise ValueError(f"{path}: non-finite value in frame {bad}")
    else:
        raise ArgumentError(f"unknown feature format {format!r}")
    return F


def normalize_rows(F) -> np.ndarray:
    """L2-normalize every row; zero rows are rejected, not patched."""
    F = check_features(F)
    norms = np.linalg.norm(F, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"frame {int(zero[0])} has an all-zero feature row")
    return F / norms[:, None]


def cosine_distance(f_i, f_j) -> float:
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    if f_i.shape != f_j.shape:
        raise ArgumentError(f"dimension mismatch: {f_i.shape} vs {f_j.shape}")
    ni, nj = np.linalg.norm(f_i), np.linalg.norm(f_j)
    if ni == 0.0 or nj == 0.0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(1.0 - np.dot(f_i, f_j) / (ni * nj))


def covisibility_matrix(F) -> np.ndarray:
    """Cosine-similarity matrix ``C = F~ F~^T`` of the row-normalized features.

    Symmetrized and clipped to [-1, 1] so rounding cannot break the invariants.
    """
    Fn = normalize_rows(F)
    C = Fn @ Fn.T
    C = 0.5 * (C + C.T)
    np.clip(C, -1.0, 1.0, out=C)
    np.fill_diagonal(C, 1.0)
    return C


def distance_from_covisibility(C) -> np.ndarray:
    """``D = max(C) - C``; with a unit diagonal this is the cosine distance."""
    C = np.asarray(C, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ArgumentError(f"covisibility matrix must be square, got shape {C.shape}")
    D = C.max() - C
    np.fill_diagonal(D, 0.0)
    return D


def frame_distances(F) -> np.ndarray:
    return distance_from_covisibility(covisibility_matrix(F))


def features_at_angles(angles_deg, dim: int = 2) -> np.ndarray:
    """Unit vectors in the first coordinate plane at the given angles (degrees).

    Extra dimensions are zero; handy for building selection problems whose
    cosine distances are known in closed form.
    """
    a = np.deg2rad(np.asarray(angles_deg, dtype=np.float64))
    if dim < 2:
        raise ArgumentError("dim must be at least 2")
    F = np.zeros((a.size, dim))
    F[:, 0] = np.cos(a)
    F[:, 1] = np.sin(a)
    return F


def random_features(n_frames: int, dim: int, seed: int = 0) -> np.ndarray:
    """Seeded Gaussian descriptors (reproducible through :class:`SplitMix64`)."""
    from ._rng import SplitMix64

    return SplitMix64(seed).normal((n_frames, dim))

"""Camera pose, point cloud and depth evaluation metrics.

Poses are camera-to-world rigid transforms ``[R | t]``, so the camera centre
of pose ``i`` is ``t_i``. Rotation errors are reported in degrees, distances
in the input units (meters).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ArgumentError

ORTHO_TOL = 1e-6
_NN_BLOCK = 2048


@dataclass(frozen=True)
class Trajectory:
    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 3, 3)
        t = np.asarray(self.translations, dtype=np.float64).reshape(-1, 3)
        if R.shape[0] != t.shape[0]:
            raise ArgumentError(f"{R.shape[0]} rotations but {t.shape[0]} translations")
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("trajectory contains non-finite values")
        err = np.abs(R @ np.swapaxes(R, 1, 2) - np.eye(3)).max(axis=(1, 2)) if len(R) else np.zeros(0)
        bad = np.flatnonzero((err > ORTHO_TOL) | (np.linalg.det(R) <= 0)) if len(R) else []
        if len(bad):
            raise ValueError(f"pose {int(bad[0])} does not hold a proper rotation")
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", t)

    def __len__(self) -> int:
        return self.rotations.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return self.translations

    @classmethod
    def from_centers(cls, centers) -> "Trajectory":
        c = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
        return cls(np.repeat(np.eye(3)[None], len(c), axis=0), c)


@dataclass(frozen=True)
class Alignment:
    """``x -> scale * rotation @ x + translation`` mapping the estimate onto ground truth."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray
    degenerate: bool = False

    def apply(self, traj: Trajectory) -> Trajectory:
        R = self.rotation @ traj.rotations
        t = self.scale * traj.translations @ self.rotation.T + self.translation
        return Trajectory(R, t)


def umeyama(source, target, with_scale: bool = True) -> Alignment:
    """Closed-form least-squares similarity (or rigid) fit of ``source`` onto ``target``."""
    src = np.asarray(source, dtype=np.float64)
    dst = np.asarray(target, dtype=np.float64)
    n = src.shape[0]
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    xs, xd = src - mu_s, dst - mu_d
    var_s = (xs**2).sum() / n
    if var_s == 0.0:
        raise ArgumentError("all estimated centres coincide; alignment is undefined")
    cov = xd.T @ xs / n
    U, d, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    degenerate = bool(np.linalg.matrix_rank(xs, tol=1e-9 * max(1.0, np.abs(xs).max())) < 2)
    if degenerate:
        warnings.warn("camera centres are collinear; the rotation about their line is not unique", stacklevel=3)
    scale = float(np.trace(np.diag(d) @ S) / var_s) if with_scale else 1.0
    return Alignment(scale, R, mu_d - scale * R @ mu_s, degenerate)


def align_trajectories(gt: Trajectory, est: Trajectory, with_scale: bool = True, return_alignment: bool = False):
    """Align ``est`` to ``gt`` over camera centres (similarity by default, rigid with ``with_scale=False``)."""
    if len(gt) != len(est):
        raise ArgumentError(f"trajectory lengths differ: {len(gt)} vs {len(est)}")
    if len(gt) < 3:
        raise ArgumentError("alignment needs at least three poses")
    a = umeyama(est.centers, gt.centers, with_scale)
    aligned = a.apply(est)
    return (aligned, a) if return_alignment else aligned


def ate(gt: Trajectory, est_aligned: Trajectory) -> float:
    """RMSE between ground-truth and (already aligned) estimated camera centres."""
    if len(gt) != len(est_aligned):
        raise ArgumentError(f"trajectory lengths differ: {len(gt)} vs {len(est_aligned)}")
    if len(gt) == 0:
        raise ArgumentError("empty trajectory")
    diff = gt.centers - est_aligned.centers
    return float(np.sqrt((diff**2).sum(axis=1).mean()))


def rotation_angle_deg(R) -> np.ndarray:
    """Rotation angle of each matrix, from ``arccos((trace - 1) / 2)`` with clamping."""
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.degrees(np.arccos(np.clip(c, -1.0, 1.0)))


def relative_poses(traj: Trajectory, delta: int = 1):
    """Rotations and translations of ``T_i^{-1} T_{i+delta}``."""
    Ri, ti = traj.rotations[:-delta], traj.translations[:-delta]
    Rj, tj = traj.rotations[delta:], traj.translations[delta:]
    RiT = np.swapaxes(Ri, 1, 2)
    return RiT @ Rj, np.einsum("nij,nj->ni", RiT, tj - ti)


def rpe(gt: Trajectory, est: Trajectory, delta: int = 1) -> tuple[float, float]:
    """Mean relative rotation error (degrees) and translation error over pose pairs ``delta`` apart."""
    if len(gt) != len(est):
        raise ArgumentError(f"trajectory lengths differ: {len(gt)} vs {len(est)}")
    if delta < 1 or len(gt) < delta + 1:
        raise ArgumentError(f"need at least {delta + 1} poses for delta={delta}")
    Rg, tg = relative_poses(gt, delta)
    Re, te = relative_poses(est, delta)
    rot = rotation_angle_deg(np.swapaxes(Rg, 1, 2) @ Re)
    trans = np.linalg.norm(tg - te, axis=1)
    return float(rot.mean()), float(trans.mean())


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud contains non-finite values")
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if n.shape != p.shape:
                raise ArgumentError("normals must match points one-to-one")
            if np.any(np.abs(np.linalg.norm(n, axis=1) - 1.0) > ORTHO_TOL):
                raise ValueError("normals must be unit length")
            object.__setattr__(self, "normals", n)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class CloudMetrics:
    acc: float
    comp: float
    acc_median: float
    comp_median: float
    nc_mean: float | None
    nc_median: float | None

    def as_dict(self) -> dict:
        d = {"acc": self.acc, "acc_median": self.acc_median, "comp": self.comp, "comp_median": self.comp_median}
        if self.nc_mean is not None:
            d["nc_mean"] = self.nc_mean
            d["nc_median"] = self.nc_median
        return d


def nearest_neighbors(queries, reference) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest neighbour (distance, index) of each query; ties to the lower index."""
    q = np.asarray(queries, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    dist = np.empty(q.shape[0])
    idx = np.empty(q.shape[0], dtype=np.int64)
    for s in range(0, q.shape[0], _NN_BLOCK):
        block = q[s : s + _NN_BLOCK]
        d2 = ((block[:, None, :] - r[None, :, :]) ** 2).sum(axis=2)
        j = d2.argmin(axis=1)
        idx[s : s + _NN_BLOCK] = j
        dist[s : s + _NN_BLOCK] = np.sqrt(d2[np.arange(block.shape[0]), j])
    return dist, idx


def cloud_metrics(pred: PointCloud, gt: PointCloud) -> CloudMetrics:
    """Accuracy, completeness and normal consistency.

    Normal consistency is the raw dot product of each predicted normal with
    the normal of its nearest ground-truth point; it is ``None`` unless both
    clouds carry normals.
    """
    if not isinstance(pred, PointCloud):
        pred = PointCloud(pred)
    if not isinstance(gt, PointCloud):
        gt = PointCloud(gt)
    if len(pred) == 0 or len(gt) == 0:
        raise ArgumentError("point clouds must be nonempty")
    d_acc, nn = nearest_neighbors(pred.points, gt.points)
    d_comp, _ = nearest_neighbors(gt.points, pred.points)
    nc_mean = nc_median = None
    if pred.normals is not None and gt.normals is not None:
        cos = (pred.normals * gt.normals[nn]).sum(axis=1)
        nc_mean, nc_median = float(cos.mean()), float(np.median(cos))
    return CloudMetrics(float(d_acc.mean()), float(d_comp.mean()), float(np.median(d_acc)), float(np.median(d_comp)), nc_mean, nc_median)


@dataclass(frozen=True)
class DepthPair:
    gt: np.ndarray
    pred: np.ndarray
    valid_mask: np.ndarray | None = None

    def valid(self) -> tuple[np.ndarray, np.ndarray]:
        gt = np.asarray(self.gt, dtype=np.float64)
        pred = np.asarray(self.pred, dtype=np.float64)
        if gt.shape != pred.shape:
            raise ArgumentError(f"depth shapes differ: {gt.shape} vs {pred.shape}")
        with np.errstate(invalid="ignore"):
            mask = np.isfinite(gt) & np.isfinite(pred) & (gt > 0) & (pred > 0)
        if self.valid_mask is not None:
            mask &= np.asarray(self.valid_mask, dtype=bool)
        if not mask.any():
            raise ArgumentError("no valid depth pixels")
        return gt[mask], pred[mask]


@dataclass(frozen=True)
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    log_rmse: float
    delta_125: float

    def as_dict(self) -> dict:
        return {"abs_rel": self.abs_rel, "sq_rel": self.sq_rel, "rmse": self.rmse, "log_rmse": self.log_rmse, "delta_125": self.delta_125}


def median_scale(gt, pred) -> np.ndarray:
    """Rescale ``pred`` so its median matches the ground-truth median."""
    return pred * (np.median(gt) / np.median(pred))


def depth_metrics(pair: DepthPair, median_scaling: bool = False) -> DepthMetrics:
    """Abs Rel, Sq Rel, RMSE, Log RMSE (natural log) and the ``delta < 1.25`` fraction over valid pixels.

    Valid pixels have finite, positive depth in both maps (and pass
    ``valid_mask`` when provided).
    """
    d, p = pair.valid()
    if median_scaling:
        p = median_scale(d, p)
    err = d - p
    ratio = np.maximum(d / p, p / d)
    return DepthMetrics(
        abs_rel=float((np.abs(err) / d).mean()),
        sq_rel=float((err**2 / d).mean()),
        rmse=float(np.sqrt((err**2).mean())),
        log_rmse=float(np.sqrt(((np.log(d) - np.log(p)) ** 2).mean())),
        delta_125=float((ratio < 1.25).mean()),
    )

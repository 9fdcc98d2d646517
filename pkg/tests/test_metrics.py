import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvselect.exceptions import ArgumentError
from kvselect.metrics import (
    DepthPair,
    PointCloud,
    Trajectory,
    align_trajectories,
    ate,
    cloud_metrics,
    depth_metrics,
    rotation_angle_deg,
    rpe,
    umeyama,
)


def rot_z(deg):
    a = math.radians(deg)
    return np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1.0]])


def random_rotation(r):
    q, _ = np.linalg.qr(r.normal(size=(3, 3)))
    return q * np.sign(np.linalg.det(q))


CENTERS = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])


class TestAlignment:
    def test_identity(self):
        t = Trajectory.from_centers(CENTERS)
        assert ate(t, align_trajectories(t, t)) == pytest.approx(0.0, abs=1e-12)

    def test_translation_removed(self):
        gt = Trajectory.from_centers(CENTERS)
        est = Trajectory.from_centers(CENTERS + [5.0, -2.0, 1.0])
        aligned, a = align_trajectories(gt, est, return_alignment=True)
        assert ate(gt, aligned) == pytest.approx(0.0, abs=1e-12)
        assert a.scale == pytest.approx(1.0)

    def test_scale_recovered(self):
        gt = Trajectory.from_centers(CENTERS)
        est = Trajectory.from_centers(0.5 * CENTERS)
        _, a = align_trajectories(gt, est, return_alignment=True)
        assert a.scale == pytest.approx(2.0, abs=1e-12)

    def test_rigid_keeps_scale(self):
        gt = Trajectory.from_centers(CENTERS)
        est = Trajectory.from_centers(0.5 * CENTERS)
        _, a = align_trajectories(gt, est, with_scale=False, return_alignment=True)
        assert a.scale == 1.0
        assert ate(gt, a.apply(est)) > 0.1

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32))
    def test_recovers_random_similarity(self, seed):
        r = np.random.default_rng(seed)
        pts = r.normal(size=(6, 3))
        R, s, t = random_rotation(r), float(r.uniform(0.2, 5)), r.normal(size=3)
        a = umeyama(pts, s * pts @ R.T + t)
        assert a.scale == pytest.approx(s, rel=1e-9)
        np.testing.assert_allclose(a.rotation, R, atol=1e-9)
        np.testing.assert_allclose(a.translation, t, atol=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32))
    def test_least_squares_optimal(self, seed):
        # perturbing the fitted transform never lowers the residual
        r = np.random.default_rng(seed)
        src, dst = r.normal(size=(8, 3)), r.normal(size=(8, 3))
        a = umeyama(src, dst)

        def cost(s, R, t):
            return ((s * src @ R.T + t - dst) ** 2).sum()

        best = cost(a.scale, a.rotation, a.translation)
        for _ in range(20):
            w = r.normal(size=3) * 1e-3
            K = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])
            dR = np.eye(3) + K + K @ K / 2
            trial = cost(a.scale * (1 + r.normal() * 1e-3), dR @ a.rotation, a.translation + r.normal(size=3) * 1e-3)
            assert trial >= best - 1e-9

    def test_similarity_invariance(self, rng):
        gt = Trajectory.from_centers(rng.normal(size=(7, 3)))
        est = Trajectory.from_centers(gt.centers + rng.normal(size=(7, 3)) * 0.1)
        base = ate(gt, align_trajectories(gt, est))
        R, s, t = random_rotation(rng), 3.0, rng.normal(size=3)
        moved = Trajectory(R @ est.rotations, s * est.centers @ R.T + t)
        assert ate(gt, align_trajectories(gt, moved)) == pytest.approx(base, rel=1e-9)

    def test_collinear_warns(self):
        gt = Trajectory.from_centers(np.outer(np.arange(4.0), [1, 0, 0]))
        with pytest.warns(UserWarning):
            _, a = align_trajectories(gt, gt, return_alignment=True)
        assert a.degenerate

    def test_errors(self):
        t = Trajectory.from_centers(CENTERS)
        with pytest.raises(ArgumentError):
            align_trajectories(t, Trajectory.from_centers(CENTERS[:3]))
        with pytest.raises(ArgumentError):
            align_trajectories(Trajectory.from_centers(CENTERS[:2]), Trajectory.from_centers(CENTERS[:2]))
        with pytest.raises(ValueError):
            Trajectory(np.full((1, 3, 3), 2.0), np.zeros((1, 3)))


class TestATE:
    def test_unit_offset(self):
        gt = Trajectory.from_centers(CENTERS)
        est = Trajectory.from_centers(CENTERS + [1.0, 0, 0])
        assert ate(gt, est) == pytest.approx(1.0)

    def test_sqrt2(self):
        gt = Trajectory.from_centers(np.zeros((2, 3)))
        est = Trajectory.from_centers([[1, 1, 0], [-1, 1, 0.0]])
        assert ate(gt, est) == pytest.approx(math.sqrt(2))


class TestRPE:
    def test_rotation_error(self):
        gt = Trajectory.from_centers(np.zeros((3, 3)))
        est = Trajectory(np.stack([np.eye(3), np.eye(3), rot_z(90)]), np.zeros((3, 3)))
        deg, trans = rpe(gt, est)
        assert deg == pytest.approx(90.0 / 2) and trans == 0.0

    def test_translation_error(self):
        gt = Trajectory.from_centers([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
        est = Trajectory.from_centers([[0, 0, 0], [1, 0, 0], [2.5, 0, 0.0]])
        assert rpe(gt, est)[1] == pytest.approx(0.5 / 2)
        assert rpe(gt, est, delta=2)[1] == pytest.approx(0.5)

    def test_relative_frame(self):
        # a shared rigid motion of the whole estimate leaves RPE at zero
        gt = Trajectory(np.stack([rot_z(0), rot_z(30), rot_z(75)]), [[0, 0, 0], [1, 2, 0], [3, 1, 1.0]])
        G = rot_z(40)
        est = Trajectory(G @ gt.rotations, gt.translations @ G.T + [4, 5, 6])
        deg, trans = rpe(gt, est)
        assert deg == pytest.approx(0.0, abs=1e-6) and trans == pytest.approx(0.0, abs=1e-12)

    def test_angle_clamped(self):
        assert rotation_angle_deg(np.eye(3) * (1 + 1e-15)) == 0.0
        assert rotation_angle_deg(rot_z(180)) == pytest.approx(180.0)

    def test_too_short(self):
        t = Trajectory.from_centers(CENTERS[:2])
        with pytest.raises(ArgumentError):
            rpe(t, t, delta=2)


class TestCloud:
    def test_example(self):
        m = cloud_metrics(PointCloud([[0, 0, 0]]), PointCloud([[1, 0, 0], [3, 0, 0]]))
        assert m.acc == 1.0 and m.comp == 2.0
        assert m.nc_mean is None and "nc_mean" not in m.as_dict()

    def test_swap(self, rng):
        a, b = PointCloud(rng.normal(size=(20, 3))), PointCloud(rng.normal(size=(15, 3)))
        m, n = cloud_metrics(a, b), cloud_metrics(b, a)
        assert (m.acc, m.comp) == (n.comp, n.acc)

    def test_brute_force(self, rng):
        p, g = rng.normal(size=(30, 3)), rng.normal(size=(25, 3))
        acc = np.mean([min(np.linalg.norm(x - y) for y in g) for x in p])
        comp = np.mean([min(np.linalg.norm(x - y) for y in p) for x in g])
        m = cloud_metrics(PointCloud(p), PointCloud(g))
        assert m.acc == pytest.approx(acc, abs=1e-9) and m.comp == pytest.approx(comp, abs=1e-9)

    def test_normal_consistency(self):
        n = np.array([[0, 0, 1.0], [0, 0, -1.0]])
        m = cloud_metrics(PointCloud([[0, 0, 0], [5, 0, 0]], n), PointCloud([[0, 0, 0], [5, 0, 0]], [[0, 0, 1.0], [0, 0, 1.0]]))
        # signed dot product, not its absolute value
        assert m.nc_mean == 0.0
        assert m.as_dict()["nc_median"] == 0.0

    def test_normals_unit(self):
        with pytest.raises(ValueError):
            PointCloud([[0, 0, 0]], [[0, 0, 2.0]])


class TestDepth:
    def test_delta(self):
        m = depth_metrics(DepthPair(np.array([1.0, 1.0]), np.array([1.2, 2.0])))
        assert m.delta_125 == 0.5

    def test_half(self):
        m = depth_metrics(DepthPair(np.array([2.0]), np.array([1.0])))
        assert (m.abs_rel, m.sq_rel, m.rmse) == (0.5, 0.5, 1.0)
        assert m.log_rmse == pytest.approx(math.log(2))

    def test_invalid_ignored(self):
        gt = np.array([[2.0, 0.0], [np.nan, 4.0]])
        pred = np.array([[2.0, 5.0], [1.0, -1.0]])
        assert depth_metrics(DepthPair(gt, pred)).rmse == 0.0
        with pytest.raises(ArgumentError):
            depth_metrics(DepthPair(gt, pred, valid_mask=np.zeros((2, 2), bool)))

    def test_median_scaling(self, rng):
        gt = rng.uniform(1, 10, size=50)
        m = depth_metrics(DepthPair(gt, 3.0 * gt), median_scaling=True)
        assert m.abs_rel == pytest.approx(0.0, abs=1e-12) and m.delta_125 == 1.0

    def test_matches_loop(self, rng):
        gt, pred = rng.uniform(0.5, 5, 40), rng.uniform(0.5, 5, 40)
        m = depth_metrics(DepthPair(gt, pred))
        assert m.abs_rel == pytest.approx(sum(abs(g - p) / g for g, p in zip(gt, pred)) / 40, rel=1e-12)
        assert m.delta_125 == sum(max(g / p, p / g) < 1.25 for g, p in zip(gt, pred)) / 40

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vertexslam import se3
from vertexslam.evaluation import (
    Trajectory,
    TrajectorySample,
    align_sim3,
    associate_by_timestamp,
    ate_rmse,
    parse_trajectory,
    serialize_trajectory,
)
from vertexslam.projection import RigidPose


def traj_from_positions(ts, positions):
    return Trajectory([
        TrajectorySample(t, RigidPose(translation=p)) for t, p in zip(ts, positions)
    ])


def random_rotation(rng):
    q = rng.normal(size=4)
    return se3.quat_to_matrix(q / np.linalg.norm(q))


class TestAssociate:
    def test_identical_timestamps(self):
        ts = np.arange(10) * 0.1
        pos = np.random.default_rng(0).normal(size=(10, 3))
        a = traj_from_positions(ts, pos)
        b = traj_from_positions(ts, pos)
        pairs = associate_by_timestamp(a, b, max_dt=0.01)
        assert len(pairs) == 10
        assert all(x.timestamp == y.timestamp for x, y in pairs)

    def test_uniform_offset_within_window(self):
        ts = np.arange(10) * 0.1
        pos = np.zeros((10, 3))
        a = traj_from_positions(ts + 0.005, pos)
        b = traj_from_positions(ts, pos)
        assert len(associate_by_timestamp(a, b, max_dt=0.01)) == 10

    def test_no_overlap_raises(self):
        a = traj_from_positions([0.0], np.zeros((1, 3)))
        b = traj_from_positions([10.0], np.zeros((1, 3)))
        with pytest.raises(ValueError, match="no overlapping"):
            associate_by_timestamp(a, b, max_dt=0.5)

    def test_mixed_rates_match_exhaustive_greedy(self):
        # 30 Hz estimates against 75 Hz ground truth, 10 ms window
        est_ts = np.arange(0, 1.0, 1 / 30)
        gt_ts = np.arange(0, 1.0, 1 / 75)
        a = traj_from_positions(est_ts, np.zeros((len(est_ts), 3)))
        b = traj_from_positions(gt_ts, np.zeros((len(gt_ts), 3)))
        max_dt = 0.010
        pairs = associate_by_timestamp(a, b, max_dt)

        # oracle: exhaustive greedy over the full cross product
        cands = sorted(
            (abs(ta - tb), i, j)
            for i, ta in enumerate(est_ts)
            for j, tb in enumerate(gt_ts)
            if abs(ta - tb) <= max_dt
        )
        used_i, used_j, count = set(), set(), 0
        for _, i, j in cands:
            if i not in used_i and j not in used_j:
                used_i.add(i)
                used_j.add(j)
                count += 1
        assert len(pairs) == count

    def test_each_gt_sample_used_once(self):
        a = traj_from_positions([0.0, 0.001, 0.002], np.zeros((3, 3)))
        b = traj_from_positions([0.0], np.zeros((1, 3)))
        pairs = associate_by_timestamp(a, b, max_dt=0.01)
        assert len(pairs) == 1


class TestAlignSim3:
    def test_identity_when_equal(self):
        rng = np.random.default_rng(1)
        pts = rng.normal(size=(20, 3))
        T = align_sim3(pts, pts)
        assert T.scale == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(T.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(T.translation, 0.0, atol=1e-12)

    def test_recovers_constructed_transform(self):
        rng = np.random.default_rng(2)
        gt = rng.normal(size=(40, 3))
        R = random_rotation(rng)
        s = 2.5
        t = np.array([1.0, 2.0, 3.0])
        est = s * gt @ R.T + t  # est = known Sim(3) applied to gt
        T = align_sim3(est, gt)  # must recover the inverse
        assert T.scale == pytest.approx(1.0 / s, rel=1e-9)
        assert np.allclose(T.rotation, R.T, atol=1e-9)
        assert np.allclose(T.apply(est), gt, atol=1e-9)

    def test_two_points_rejected(self):
        with pytest.raises(ValueError, match=">= 3"):
            align_sim3(np.zeros((2, 3)), np.zeros((2, 3)))

    def test_collinear_rejected(self):
        src = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]], dtype=float)
        with pytest.raises(ValueError, match="collinear|coincide"):
            align_sim3(src, src * 2.0)

    def test_reflection_guard(self):
        rng = np.random.default_rng(3)
        gt = rng.normal(size=(30, 3))
        est = gt.copy()
        est[:, 2] *= -1  # a reflection, not in Sim(3)
        T = align_sim3(est, gt)
        assert np.linalg.det(T.rotation) == pytest.approx(1.0, abs=1e-9)


class TestAteRmse:
    def test_zero_error_for_identical(self):
        rng = np.random.default_rng(4)
        ts = np.arange(20) * 0.2
        pos = rng.normal(scale=2.0, size=(20, 3))
        report = ate_rmse(traj_from_positions(ts, pos), traj_from_positions(ts, pos), 0.01)
        assert report.rmse < 1e-12
        assert report.n_matched == 20
        assert report.rmse**2 == pytest.approx(np.mean(report.per_sample_errors**2), abs=1e-18)

    def test_single_displaced_sample_bound(self):
        rng = np.random.default_rng(5)
        n = 50
        ts = np.arange(n) * 0.1
        pos = rng.normal(size=(n, 3))
        est = pos.copy()
        d = 0.3
        est[7] += [d, 0.0, 0.0]
        report = ate_rmse(traj_from_positions(ts, est), traj_from_positions(ts, pos), 0.01)
        # alignment can only shrink the raw rmse d/sqrt(n)
        assert report.rmse <= d / np.sqrt(n) + 1e-12
        assert report.max <= d

    @settings(max_examples=25, deadline=None)
    @given(
        s=st.floats(0.1, 10.0),
        seed=st.integers(0, 10_000),
    )
    def test_sim3_invariance(self, s, seed):
        rng = np.random.default_rng(seed)
        n = 15
        ts = np.arange(n) * 0.1
        gt = rng.normal(size=(n, 3))
        est = gt + rng.normal(scale=0.05, size=(n, 3))
        base = ate_rmse(traj_from_positions(ts, est), traj_from_positions(ts, gt), 0.01)
        R = random_rotation(rng)
        t = rng.normal(size=3)
        est_T = s * est @ R.T + t
        moved = ate_rmse(traj_from_positions(ts, est_T), traj_from_positions(ts, gt), 0.01)
        assert moved.rmse == pytest.approx(base.rmse, abs=1e-9)


class TestTrajectoryIo:
    def test_round_trip(self):
        rng = np.random.default_rng(6)
        samples = []
        for i in range(12):
            q = rng.normal(size=4)
            samples.append(TrajectorySample(
                i / 30.0, RigidPose(q / np.linalg.norm(q), rng.normal(size=3))
            ))
        traj = Trajectory(samples)
        again = parse_trajectory(serialize_trajectory(traj))
        assert len(again) == len(traj)
        for a, b in zip(traj.samples, again.samples):
            assert b.timestamp == pytest.approx(a.timestamp, abs=1e-9)
            assert np.allclose(b.pose.translation, a.pose.translation, atol=1e-9)
            assert min(np.linalg.norm(b.pose.rotation - a.pose.rotation),
                       np.linalg.norm(b.pose.rotation + a.pose.rotation)) < 1e-8

    def test_comments_and_blank_lines_skipped(self):
        text = "# header\n\n0.0 1 2 3 0 0 0 1\n# trailing\n"
        traj = parse_trajectory(text)
        assert len(traj) == 1
        assert np.allclose(traj.samples[0].pose.translation, [1, 2, 3])

    def test_bad_field_count(self):
        with pytest.raises(ValueError, match="8 fields"):
            parse_trajectory("0.0 1 2 3\n")

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no samples"):
            parse_trajectory("# nothing\n")

    def test_monotone_timestamps_enforced(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            Trajectory([
                TrajectorySample(1.0, RigidPose.identity()),
                TrajectorySample(1.0, RigidPose.identity()),
            ])


class TestInterpolation:
    def test_exact_at_nodes_linear_between(self):
        traj = traj_from_positions([0.0, 1.0], [[0, 0, 0], [2.0, 0, 0]])
        assert np.allclose(traj.interpolate(0.0).translation, [0, 0, 0])
        assert np.allclose(traj.interpolate(1.0).translation, [2, 0, 0])
        assert np.allclose(traj.interpolate(0.25).translation, [0.5, 0, 0])

    def test_slerp_orientation_halfway(self):
        q0 = np.array([0.0, 0.0, 0.0, 1.0])
        q1 = np.array([0.0, 0.0, np.sin(np.pi / 4), np.cos(np.pi / 4)])
        traj = Trajectory([
            TrajectorySample(0.0, RigidPose(q0, (0, 0, 0))),
            TrajectorySample(1.0, RigidPose(q1, (0, 0, 0))),
        ])
        mid = traj.interpolate(0.5)
        expected = np.array([0.0, 0.0, np.sin(np.pi / 8), np.cos(np.pi / 8)])
        assert np.allclose(mid.rotation, expected, atol=1e-12)

    def test_clamps_outside_range(self):
        traj = traj_from_positions([0.0, 1.0], [[0, 0, 0], [1, 1, 1]])
        assert np.allclose(traj.interpolate(-5.0).translation, [0, 0, 0])
        assert np.allclose(traj.interpolate(9.0).translation, [1, 1, 1])

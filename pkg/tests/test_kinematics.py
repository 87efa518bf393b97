import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reachpred.errors import NotConverged, Unreachable
from reachpred.kinematics import (
    ArmModel,
    JointPose,
    forward_kinematics,
    jacobian,
    min_jerk_profile,
    plan_reach,
    segment_axes,
    solve_ik,
)

ARM = ArmModel()


def _q_strategy(elv_lo=0.05, elv_hi=np.pi - 0.05, yaw=2.8):
    f = st.floats(allow_nan=False, allow_infinity=False)
    return st.tuples(
        st.floats(elv_lo, elv_hi),
        st.floats(-yaw, yaw),
        st.floats(elv_lo, elv_hi),
        st.floats(-yaw, yaw),
    ).map(np.array)


class TestForwardKinematics:
    def test_all_right_angles_gives_straight_arm_along_x(self):
        q = np.array([np.pi / 2, np.pi / 2, np.pi / 2, np.pi / 2])
        p = forward_kinematics(q, ARM)
        assert np.allclose(p, [ARM.span, 0.0, 0.0], atol=1e-12)

    def test_zero_pose_hangs_down(self):
        p = forward_kinematics(np.zeros(4), ARM)
        assert np.allclose(p, [0.0, 0.0, -ARM.l_u + ARM.l_f], atol=1e-12)

    def test_forward_elevations_zero_yaw(self):
        # both segments horizontal pointing forward (+y)
        q = np.array([np.pi / 2, 0.0, np.pi / 2, 0.0])
        p = forward_kinematics(q, ARM)
        assert np.allclose(p, [0.0, ARM.span, 0.0], atol=1e-12)

    def test_accepts_jointpose_and_batches(self):
        jp = JointPose(0.3, 0.1, 0.7, -0.2)
        p1 = forward_kinematics(jp, ARM)
        batch = np.stack([jp.as_array()] * 5)
        pb = forward_kinematics(batch, ARM)
        assert pb.shape == (5, 3)
        assert np.allclose(pb, p1)

    @given(_q_strategy())
    @settings(max_examples=100, deadline=None)
    def test_norm_bounded_by_span(self, q):
        p = forward_kinematics(q, ARM)
        assert np.linalg.norm(p) <= ARM.span + 1e-12

    @given(_q_strategy())
    @settings(max_examples=50, deadline=None)
    def test_matches_segment_axis_sum(self, q):
        a_u, a_f = segment_axes(q)
        assert abs(np.linalg.norm(a_u) - 1.0) < 1e-12
        assert abs(np.linalg.norm(a_f) - 1.0) < 1e-12
        p = forward_kinematics(q, ARM)
        assert np.allclose(p, ARM.l_u * a_u + ARM.l_f * a_f, atol=1e-14)

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            ArmModel(l_u=0.0, l_f=0.3)


class TestJacobian:
    @given(_q_strategy())
    @settings(max_examples=60, deadline=None)
    def test_matches_finite_differences(self, q):
        J = jacobian(q, ARM)
        h = 1e-6
        for j in range(4):
            dq = np.zeros(4)
            dq[j] = h
            col = (forward_kinematics(q + dq, ARM) - forward_kinematics(q - dq, ARM)) / (2 * h)
            assert np.allclose(J[:, j], col, atol=1e-8)


class TestMinJerk:
    def test_boundary_values(self):
        s, ds, dds = min_jerk_profile(np.array([0.0, 1.0]))
        assert np.allclose(s, [0.0, 1.0], atol=1e-15)
        assert np.allclose(ds, [0.0, 0.0], atol=1e-12)
        assert np.allclose(dds, [0.0, 0.0], atol=1e-12)

    def test_known_values(self):
        # hand-evaluated: s(0.2) = 10*.008 - 15*.0016 + 6*.00032,  s(0.5) = 0.5
        s, _, _ = min_jerk_profile(np.array([0.2, 0.5]))
        assert abs(s[0] - 0.05792) < 1e-12
        assert abs(s[1] - 0.5) < 1e-12

    def test_peak_rate_is_15_over_8_at_midpoint(self):
        tau = np.linspace(0.0, 1.0, 10001)
        _, ds, _ = min_jerk_profile(tau)
        assert abs(ds.max() - 1.875) < 1e-9
        assert abs(tau[ds.argmax()] - 0.5) < 1e-3

    def test_monotone_nondecreasing(self):
        s, _, _ = min_jerk_profile(np.linspace(0, 1, 2001))
        assert np.all(np.diff(s) >= -1e-15)

    def test_derivatives_match_finite_differences(self):
        tau = np.linspace(0.0, 1.0, 20001)
        s, ds, dds = min_jerk_profile(tau)
        h = tau[1] - tau[0]
        fd = np.gradient(s, h)
        assert np.allclose(ds[2:-2], fd[2:-2], atol=1e-6)
        fd2 = np.gradient(ds, h)
        assert np.allclose(dds[2:-2], fd2[2:-2], atol=1e-5)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            min_jerk_profile(1.2)
        with pytest.raises(ValueError):
            min_jerk_profile(-0.01)


MID_SEED = np.array([np.pi / 3, 0.2, np.pi / 3, -0.1])


class TestInverseKinematics:
    @given(_q_strategy(elv_lo=0.3, elv_hi=np.pi - 0.3, yaw=2.0))
    @settings(max_examples=60, deadline=None)
    def test_round_trip_reaches_target(self, q_true):
        target = forward_kinematics(q_true, ARM)
        q = solve_ik(target, ARM, seed=MID_SEED, tol=1e-10)
        assert np.linalg.norm(forward_kinematics(q, ARM) - target) < 1e-9

    def test_seeded_at_solution_returns_seed(self):
        target = forward_kinematics(MID_SEED, ARM)
        q = solve_ik(target, ARM, seed=MID_SEED)
        assert np.allclose(q, MID_SEED, atol=1e-12)

    def test_redundancy_resolved_toward_seed(self):
        target = np.array([0.1, 0.35, -0.05])
        seed_a = np.array([0.9, 0.1, 1.2, 0.3])
        q_a = solve_ik(target, ARM, seed=seed_a, tol=1e-10)
        # re-solving from the previous solution should stay put
        q_b = solve_ik(target, ARM, seed=q_a, tol=1e-10)
        assert np.linalg.norm(q_b - q_a) < 1e-6

    def test_near_boundary_target_converges(self):
        target = np.array([0.0, 0.97 * ARM.span, 0.0])
        q = solve_ik(target, ARM, seed=MID_SEED, tol=1e-9, max_iter=500)
        assert np.linalg.norm(forward_kinematics(q, ARM) - target) < 1e-9

    def test_unreachable_raises(self):
        with pytest.raises(Unreachable):
            solve_ik(np.array([0.0, ARM.span + 0.01, 0.0]), ARM, seed=MID_SEED)

    def test_inner_boundary_raises(self):
        with pytest.raises(Unreachable):
            solve_ik(np.array([0.0, 1e-4, 0.0]), ARM, seed=MID_SEED)

    def test_not_converged_raises(self):
        with pytest.raises(NotConverged):
            solve_ik(np.array([0.0, 0.4, 0.2]), ARM, seed=np.zeros(4), max_iter=1)


class TestPlanReach:
    def setup_method(self):
        self.q0 = np.array([0.4, 0.0, 0.5, 0.0])
        self.target = np.array([0.15, 0.35, 0.05])
        self.traj = plan_reach(self.q0, self.target, t_f=1.5, T=2.0, arm=ARM)

    def test_sample_count_and_times(self):
        assert len(self.traj) == 120
        assert np.allclose(self.traj.t, np.arange(120) / 60.0, atol=1e-15)

    def test_starts_at_q0(self):
        assert np.allclose(self.traj.q[0], self.q0, atol=1e-15)
        assert np.allclose(self.traj.p[0], forward_kinematics(self.q0, ARM), atol=1e-15)

    def test_p_is_fk_of_q_everywhere(self):
        p = forward_kinematics(self.traj.q, ARM)
        assert np.max(np.abs(p - self.traj.p)) < 1e-12

    def test_hold_reaches_and_keeps_target(self):
        hold = self.traj.t >= self.traj.t_f
        assert hold.sum() == 30
        err = np.linalg.norm(self.traj.p[hold] - self.target, axis=1)
        assert err.max() < 1e-9
        q_hold = self.traj.q[hold]
        assert np.max(np.abs(q_hold - q_hold[0])) == 0.0
        assert np.max(np.abs(self.traj.qdot[hold])) == 0.0

    def test_path_follows_min_jerk_line(self):
        p0 = forward_kinematics(self.q0, ARM)
        dp = self.target - p0
        moving = self.traj.t < self.traj.t_f
        s, _, _ = min_jerk_profile(self.traj.t[moving] / self.traj.t_f)
        expected = p0 + s[:, None] * dp
        assert np.max(np.linalg.norm(self.traj.p[moving] - expected, axis=1)) < 1e-9

    def test_peak_wrist_speed_matches_min_jerk(self):
        traj = plan_reach(self.q0, self.target, t_f=1.5, T=2.0, arm=ARM, rate=240.0)
        v = np.array([jacobian(q, ARM) @ qd for q, qd in zip(traj.q, traj.qdot)])
        speed = np.linalg.norm(v, axis=1)
        p0 = forward_kinematics(self.q0, ARM)
        expected = 1.875 * np.linalg.norm(self.target - p0) / traj.t_f
        assert abs(speed.max() - expected) / expected < 1e-3

    def test_qdot_matches_finite_differences_at_internal_rate(self):
        traj = plan_reach(self.q0, self.target, t_f=1.5, T=2.0, arm=ARM, rate=240.0)
        h = 1.0 / 240.0
        fd = (traj.q[2:] - traj.q[:-2]) / (2 * h)
        interior = traj.t[1:-1] < traj.t_f - 2 * h
        err = np.max(np.abs(fd[interior] - traj.qdot[1:-1][interior]))
        assert err < 1e-3

    def test_validation_errors(self):
        with pytest.raises(ValueError):
            plan_reach(self.q0, self.target, t_f=0.0, T=2.0, arm=ARM)
        with pytest.raises(ValueError):
            plan_reach(self.q0, self.target, t_f=2.5, T=2.0, arm=ARM)
        with pytest.raises(ValueError):
            plan_reach(self.q0, self.target, t_f=1.0, T=2.0, arm=ARM, rate=60, internal_rate=250)
        with pytest.raises(Unreachable):
            plan_reach(self.q0, np.array([0.0, 0.9, 0.0]), t_f=1.0, T=2.0, arm=ARM)

    def test_t_f_equals_T_has_no_hold(self):
        traj = plan_reach(self.q0, self.target, t_f=2.0, T=2.0, arm=ARM)
        assert np.all(traj.t < traj.t_f)
        # final sample sits just short of arrival on the min-jerk profile
        assert np.linalg.norm(traj.p[-1] - self.target) < 1e-4

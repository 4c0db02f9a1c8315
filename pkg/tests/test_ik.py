import math

import numpy as np
import pytest

from spillfree.exceptions import IKDivergenceError, SingularityError
from spillfree.manipulator.dual_quaternion import DualQuaternion, pose_error
from spillfree.manipulator.ik import damped_pinv_solve, differential_ik, newton_ik, pose_from_state
from spillfree.manipulator.robot import forward_kinematics, geometric_jacobian
from spillfree.pendulum import rod_vector


class TestPoseFromState:
    def test_hanging_mass(self, params):
        pose = pose_from_state(np.zeros(10), params)
        np.testing.assert_allclose(pose.translation, [0.0, 0.0, -0.6], atol=1e-15)
        np.testing.assert_allclose(pose.rotation_matrix(), np.eye(3), atol=1e-15)

    @pytest.mark.parametrize("yaw", [0.0, 0.7])
    def test_container_axis_follows_rod(self, params, yaw):
        state = np.zeros(10)
        state[3], state[4] = 0.2, -0.3
        R = pose_from_state(state, params, yaw).rotation_matrix()
        np.testing.assert_allclose(R[:, 2], -rod_vector(0.2, -0.3, 1.0), atol=1e-14)


class TestDampedPseudoInverse:
    def test_undamped_matches_pseudo_inverse(self, panda, rng):
        J = geometric_jacobian(panda.seed, panda)
        twist = rng.normal(size=6)
        np.testing.assert_allclose(damped_pinv_solve(J, twist, 0.0), np.linalg.pinv(J) @ twist, atol=1e-10)


class TestDifferentialIK:
    def test_constant_pose_keeps_joints_still(self, panda):
        q0 = np.array(panda.seed)
        poses = [forward_kinematics(q0, panda)] * 11
        joints = differential_ik(poses, q0, panda, 0.033)
        np.testing.assert_allclose(joints.q, np.tile(q0, (11, 1)), atol=1e-10)
        np.testing.assert_allclose(joints.dq, 0.0, atol=1e-10)
        assert joints.N == 10
        assert math.isclose(joints.Ts, 0.033)

    def test_single_joint_arc(self, arm1):
        omega, Ts, N = 1.0, 0.01, 50
        poses = [forward_kinematics([omega * k * Ts], arm1) for k in range(N + 1)]
        joints = differential_ik(poses, [0.0], arm1, Ts)
        np.testing.assert_allclose(joints.dq[:, 0], omega, atol=1e-6)
        np.testing.assert_allclose(joints.q[:, 0], omega * Ts * np.arange(N + 1), atol=1e-6)
        np.testing.assert_allclose(joints.ddq, 0.0, atol=1e-3)
        assert joints.tracking_summary()["max_position_error"] < 1e-6

    def test_tracks_a_smooth_panda_motion(self, panda):
        q0 = np.array(panda.seed)
        start = forward_kinematics(q0, panda)
        t = np.arange(61) * 0.033
        offsets = 0.1 * np.column_stack((np.sin(t), 1 - np.cos(t), 0.5 * np.sin(2 * t)))
        poses = [DualQuaternion.trans(*o) * start for o in offsets]
        joints = differential_ik(poses, q0, panda, 0.033)
        assert joints.tracking_summary()["max_position_error"] < 1e-3
        final = forward_kinematics(joints.q[-1], panda)
        assert np.linalg.norm(pose_error(poses[-1], final)) < 1e-3

    def test_unreachable_motion_diverges(self, arm1):
        start = forward_kinematics([0.0], arm1)
        poses = [DualQuaternion.trans(z=0.02 * k) * start for k in range(6)]
        with pytest.raises(IKDivergenceError) as excinfo:
            differential_ik(poses, [0.0], arm1, 0.033)
        assert excinfo.value.node is not None and excinfo.value.node >= 1

    def test_wrong_start_configuration(self, arm1):
        poses = [forward_kinematics([0.0], arm1)] * 3
        with pytest.raises(IKDivergenceError) as excinfo:
            differential_ik(poses, [0.1], arm1, 0.033)
        assert excinfo.value.node == 0

    def test_singularity_reported_with_node(self, arm1):
        poses = [forward_kinematics([0.0], arm1)] * 3
        with pytest.raises(SingularityError) as excinfo:
            differential_ik(poses, [0.0], arm1, 0.033, manipulability_threshold=1e6)
        assert excinfo.value.node == 0


class TestNewtonIK:
    def test_reaches_a_reachable_pose(self, panda, rng):
        q_target = np.array(panda.seed) + rng.normal(scale=0.3, size=7)
        target = forward_kinematics(q_target, panda)
        q = newton_ik(target, panda)
        assert np.linalg.norm(pose_error(target, forward_kinematics(q, panda))) < 1e-9

    def test_unreachable_pose(self, panda):
        target = DualQuaternion.trans(x=5.0)
        with pytest.raises(IKDivergenceError):
            newton_ik(target, panda, max_iter=50)

import json
import math

import numpy as np
import pytest

from spillfree.exceptions import ConfigError, InvalidStateError
from spillfree.manipulator.robot import (
    RobotModel,
    forward_kinematics,
    geometric_jacobian,
    link_frames,
    manipulability,
    pose_and_jacobian,
)
from spillfree.manipulator.dual_quaternion import pose_error

from conftest import PANDA


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def trans(x=0.0, y=0.0, z=0.0):
    T = np.eye(4)
    T[:3, 3] = [x, y, z]
    return T


def matrix_fk(q, model):
    """Forward kinematics by plain 4x4 products of the modified DH transforms."""
    T = np.eye(4)
    for joint, qi in zip(model.joints, q):
        T = T @ rot_x(joint.alpha) @ trans(x=joint.a) @ rot_z(qi + joint.theta_offset) @ trans(z=joint.d)
    return T @ model.flange.to_matrix() @ model.tool.to_matrix()


def test_panda_home_pose(panda):
    pose = forward_kinematics(np.zeros(7), panda)
    np.testing.assert_allclose(pose.translation, [0.088, 0.0, 0.726], atol=1e-12)
    np.testing.assert_allclose(pose.rotation_matrix(), np.eye(3), atol=1e-12)


def test_first_joint_turns_the_arm(panda):
    q = np.zeros(7)
    q[0] = math.pi / 2
    np.testing.assert_allclose(forward_kinematics(q, panda).translation, [0.0, 0.088, 0.726], atol=1e-12)


def test_fk_matches_matrix_products(panda, rng):
    for _ in range(10):
        q = rng.uniform(panda.limits.q_min, panda.limits.q_max)
        np.testing.assert_allclose(forward_kinematics(q, panda).to_matrix(), matrix_fk(q, panda), atol=1e-12)


def test_jacobian_of_single_joint(arm1):
    J = geometric_jacobian([0.0], arm1)
    np.testing.assert_allclose(J[:, 0], [0.0, 0.0, 1.0, 0.0, 0.5, 0.0], atol=1e-15)


def test_jacobian_matches_finite_differences(panda, rng):
    q = np.array(panda.seed) + rng.normal(scale=0.2, size=7)
    dq = rng.normal(size=7)
    h = 1e-6
    pose, J = pose_and_jacobian(q, panda)
    twist = pose_error(forward_kinematics(q + h * dq, panda), forward_kinematics(q - h * dq, panda)) / (2 * h)
    np.testing.assert_allclose(J @ dq, twist, atol=1e-6)
    np.testing.assert_allclose(pose.to_matrix(), forward_kinematics(q, panda).to_matrix(), atol=1e-15)


def test_link_frames_end_at_the_last_joint(panda):
    q = np.array(panda.seed)
    frames = link_frames(q, panda)
    assert len(frames) == 7
    np.testing.assert_allclose(
        (frames[-1] * panda.end_effector).to_matrix(), forward_kinematics(q, panda).to_matrix(), atol=1e-14
    )


def test_manipulability(panda, arm2):
    assert manipulability(geometric_jacobian(panda.seed, panda)) > 1e-2
    # a stretched planar two-link arm still has independent columns in 6D
    assert manipulability(geometric_jacobian([0.0, 0.0], arm2)) > 0.0
    assert manipulability(np.zeros((6, 7))) == 0.0


def test_check_q_rejects_wrong_length(panda):
    with pytest.raises(InvalidStateError):
        forward_kinematics(np.zeros(6), panda)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        RobotModel.load(tmp_path / "absent.json")


def test_load_rejects_mismatched_inertia(tmp_path):
    data = json.loads(PANDA.read_text())
    data["inertia"] = data["inertia"][:3]
    path = tmp_path / "robot.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError, match="inertia"):
        RobotModel.load(path)


def test_load_rejects_prismatic_joints(tmp_path):
    data = {"joints": [{"type": "prismatic", "dh": {}}]}
    path = tmp_path / "robot.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ConfigError):
        RobotModel.load(path)


def test_panda_model(panda):
    assert panda.n == 7
    assert panda.has_dynamics
    assert panda.limits.dq[0] == 2.175
    assert panda.seed is not None


def test_payload_moves_last_link_mass(panda):
    loaded = panda.with_payload(1.0)
    assert math.isclose(loaded.inertia[-1].mass, panda.inertia[-1].mass + 1.0)
    assert loaded.inertia[0] is panda.inertia[0]
    tool_point = panda.end_effector.translation
    before = panda.inertia[-1].com
    after = loaded.inertia[-1].com
    # the combined center of mass lies between the link's and the payload's
    assert np.linalg.norm(after - tool_point) < np.linalg.norm(before - tool_point)


def test_payload_without_dynamics_is_noop(arm1):
    assert arm1.with_payload(1.0) is arm1

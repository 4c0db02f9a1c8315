"""
Serial manipulator support: poses, kinematics, differential IK and dynamics.
"""

from .dual_quaternion import DualQuaternion, pose_error
from .dynamics import (
    LimitEntry,
    gravity_torques,
    joint_torques,
    kinetic_energy,
    limits_report,
    mass_matrix,
    potential_energy,
    rnea,
)
from .ik import (
    JointTrajectory,
    differential_ik,
    newton_ik,
    pose_from_state,
    poses_from_trajectory,
)
from .robot import (
    DHJoint,
    JointLimits,
    LinkInertia,
    RobotModel,
    forward_kinematics,
    geometric_jacobian,
    link_frames,
    manipulability,
)

__all__ = [
    "DHJoint",
    "DualQuaternion",
    "JointLimits",
    "JointTrajectory",
    "LimitEntry",
    "LinkInertia",
    "RobotModel",
    "differential_ik",
    "forward_kinematics",
    "geometric_jacobian",
    "gravity_torques",
    "joint_torques",
    "kinetic_energy",
    "limits_report",
    "link_frames",
    "manipulability",
    "mass_matrix",
    "newton_ik",
    "pose_error",
    "pose_from_state",
    "poses_from_trajectory",
    "potential_energy",
    "rnea",
]

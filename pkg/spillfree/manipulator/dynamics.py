"""
Inverse dynamics and limit evaluation for joint trajectories.

Recursive Newton-Euler on modified Denavit-Hartenberg frames: an outward pass
propagates link velocities and accelerations (gravity enters as an upward base
acceleration), an inward pass accumulates forces and moments.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np
import numpy.typing as npt

from ..exceptions import DynamicsUnavailableError
from .ik import JointTrajectory
from .robot import RobotModel, link_frames

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

GRAVITY = 9.81
Z_AXIS = np.array([0.0, 0.0, 1.0])


def _require_dynamics(model: RobotModel):
    if not model.has_dynamics:
        raise DynamicsUnavailableError(f"dynamics unavailable: model {model.name!r} has no inertial parameters")


def rnea(
    q: npt.ArrayLike,
    dq: npt.ArrayLike,
    ddq: npt.ArrayLike,
    model: RobotModel,
    gravity: float = GRAVITY,
) -> Array:
    """
    Joint torques for one configuration, velocity and acceleration.

    Args:
        q, dq, ddq: Joint positions, velocities, accelerations (n,)
        model: Robot model with inertial parameters
        gravity: Gravity magnitude along -z of the base

    Returns:
        Torque vector (n,) in N m
    """
    _require_dynamics(model)
    q = model.check_q(q)
    dq = np.asarray(dq, dtype=float)
    ddq = np.asarray(ddq, dtype=float)
    n = model.n

    rotations = []
    offsets = []
    for joint, qi in zip(model.joints, q):
        T = joint.transform(qi)
        rotations.append(T.rotation_matrix())
        offsets.append(T.translation)

    w = np.zeros(3)
    dw = np.zeros(3)
    dv = np.array([0.0, 0.0, gravity])
    forces = []
    moments = []
    for i in range(n):
        R, p = rotations[i], offsets[i]
        link = model.inertia[i]
        dv = R.T @ (np.cross(dw, p) + np.cross(w, np.cross(w, p)) + dv)
        w_prev = R.T @ w
        w = w_prev + dq[i] * Z_AXIS
        dw = R.T @ dw + np.cross(w_prev, dq[i] * Z_AXIS) + ddq[i] * Z_AXIS
        dv_c = np.cross(dw, link.com) + np.cross(w, np.cross(w, link.com)) + dv
        forces.append(link.mass * dv_c)
        moments.append(link.inertia @ dw + np.cross(w, link.inertia @ w))

    tau = np.empty(n)
    f = np.zeros(3)
    m = np.zeros(3)
    for i in reversed(range(n)):
        link = model.inertia[i]
        if i + 1 < n:
            R_next, p_next = rotations[i + 1], offsets[i + 1]
            f_child = R_next @ f
            m = moments[i] + R_next @ m + np.cross(link.com, forces[i]) + np.cross(p_next, f_child)
            f = forces[i] + f_child
        else:
            m = moments[i] + np.cross(link.com, forces[i])
            f = forces[i]
        tau[i] = m[2]
    return tau


def gravity_torques(q: npt.ArrayLike, model: RobotModel, gravity: float = GRAVITY) -> Array:
    zeros = np.zeros(model.n)
    return rnea(q, zeros, zeros, model, gravity)


def mass_matrix(q: npt.ArrayLike, model: RobotModel) -> Array:
    """Joint-space inertia matrix, column by column from zero-gravity RNEA."""
    zeros = np.zeros(model.n)
    M = np.column_stack([rnea(q, zeros, e, model, gravity=0.0) for e in np.eye(model.n)])
    return 0.5 * (M + M.T)


def kinetic_energy(q: npt.ArrayLike, dq: npt.ArrayLike, model: RobotModel) -> float:
    dq = np.asarray(dq, dtype=float)
    return 0.5 * float(dq @ mass_matrix(q, model) @ dq)


def potential_energy(q: npt.ArrayLike, model: RobotModel, gravity: float = GRAVITY) -> float:
    """Sum of m_i g z_ci over the links."""
    _require_dynamics(model)
    frames = link_frames(q, model)
    return float(
        sum(
            link.mass * gravity * (frame.rotation.apply(link.com) + frame.translation)[2]
            for frame, link in zip(frames, model.inertia)
        )
    )


def joint_torques(jt: JointTrajectory, model: RobotModel) -> Array:
    """
    Torques along a joint trajectory.

    Raises:
        DynamicsUnavailableError: If the model has no inertial parameters
    """
    _require_dynamics(model)
    tau = np.array([rnea(q, dq, ddq, model) for q, dq, ddq in zip(jt.q, jt.dq, jt.ddq)])
    logger.debug(f"Computed torques at {tau.shape[0]} nodes")
    return tau


@dataclass(frozen=True)
class LimitEntry:
    """Worst case of one quantity on one joint."""

    quantity: str
    joint: int
    peak: float
    limit: float
    margin: float
    first_violation: Optional[int] = None

    @property
    def violated(self) -> bool:
        return self.first_violation is not None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "quantity": self.quantity,
            "joint": self.joint,
            "peak": self.peak,
            "limit": self.limit,
            "margin": self.margin,
            "first_violation": self.first_violation,
        }


def _first(mask: Array) -> Optional[int]:
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else None


def limits_report(jt: JointTrajectory, model: RobotModel) -> List[LimitEntry]:
    """
    Peak values, margins and first violating node per quantity and joint.

    Position margins are the distance to the nearer limit; derivative and
    torque margins are limit minus peak magnitude. Torques are included when
    the trajectory carries them.
    """
    entries: List[LimitEntry] = []
    limits = model.limits
    for j in range(model.n):
        q = jt.q[:, j]
        lower_gap = q - limits.q_min[j]
        upper_gap = limits.q_max[j] - q
        worst = int(np.argmin(np.minimum(lower_gap, upper_gap)))
        entries.append(
            LimitEntry(
                quantity="q",
                joint=j + 1,
                peak=float(q[worst]),
                limit=float(limits.q_min[j] if lower_gap[worst] < upper_gap[worst] else limits.q_max[j]),
                margin=float(min(lower_gap[worst], upper_gap[worst])),
                first_violation=_first((lower_gap < 0) | (upper_gap < 0)),
            )
        )

    quantities = [("dq", jt.dq, limits.dq), ("ddq", jt.ddq, limits.ddq), ("dddq", jt.dddq, limits.dddq)]
    if jt.tau is not None:
        quantities.append(("tau", jt.tau, limits.tau))
    for name, values, bound in quantities:
        for j in range(model.n):
            magnitude = np.abs(values[:, j])
            peak = float(magnitude.max())
            entries.append(
                LimitEntry(
                    quantity=name,
                    joint=j + 1,
                    peak=peak,
                    limit=float(bound[j]),
                    margin=float(bound[j] - peak),
                    first_violation=_first(magnitude > bound[j]),
                )
            )

    violations = [e for e in entries if e.violated]
    if violations:
        logger.warning(f"{len(violations)} joint limit violations")
    return entries

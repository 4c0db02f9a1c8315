"""
Workspace-to-joint-space mapping.

Mass poses of the pendulum plan become tool poses; differential inverse
kinematics integrates damped pseudo-inverse joint velocities along them.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

from ..exceptions import IKDivergenceError, SingularityError
from ..pendulum import PHI, THETA, PendulumParams, as_state, container_rotation, mass_position
from ..progress import ProgressReporter
from ..trajectory import Trajectory
from .dual_quaternion import DualQuaternion, pose_error
from .robot import RobotModel, forward_kinematics, manipulability, pose_and_jacobian

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

FEEDBACK_GAIN = 10.0
DAMPING = 1e-4
MAX_DAMPING = 0.05
MANIPULABILITY_THRESHOLD = 1e-4
# damping is inflated below this manipulability
DAMPING_ONSET = 1e-2
DIVERGENCE_LIMIT = 0.05
START_TOLERANCE = 1e-3


@dataclass(frozen=True)
class JointTrajectory:
    """Joint positions and derivatives on the plan's time grid."""

    times: Array
    q: Array
    dq: Array
    ddq: Array
    dddq: Array
    position_error: Array
    orientation_error: Array
    tau: Optional[Array] = None

    @property
    def N(self) -> int:
        return self.q.shape[0] - 1

    @property
    def Ts(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def with_torques(self, tau: Array) -> "JointTrajectory":
        return replace(self, tau=np.asarray(tau, dtype=float))

    def tracking_summary(self) -> dict:
        return {
            "max_position_error": float(np.max(self.position_error)),
            "max_orientation_error": float(np.max(self.orientation_error)),
        }


def pose_from_state(state: npt.ArrayLike, params: PendulumParams, yaw: float = 0.0) -> DualQuaternion:
    """
    Container pose for a pendulum state.

    Translation is the mass position. Orientation is the container frame
    R_x(phi) R_y(theta) followed by the constant yaw about the container axis,
    so the container z axis stays aligned with the rod.
    """
    x = as_state(state)
    rotation = Rotation.from_matrix(container_rotation(x[THETA], x[PHI])) * Rotation.from_euler("z", yaw)
    return DualQuaternion.from_rotation_translation(rotation, mass_position(x, params))


def poses_from_trajectory(traj: Trajectory, params: PendulumParams, yaw: float = 0.0) -> List[DualQuaternion]:
    return [pose_from_state(x, params, yaw) for x in traj.states]


def damped_pinv_solve(J: Array, twist: Array, damping: float) -> Array:
    """q_dot = J' (J J' + damping^2 I)^-1 twist."""
    JJt = J @ J.T
    return J.T @ np.linalg.solve(JJt + damping**2 * np.eye(JJt.shape[0]), twist)


def _damping(w: float, damping: float) -> float:
    if w >= DAMPING_ONSET:
        return damping
    return math.sqrt(damping**2 + (1.0 - w / DAMPING_ONSET) ** 2 * MAX_DAMPING**2)


def _errors(target: DualQuaternion, current: DualQuaternion) -> Array:
    err = pose_error(target, current)
    return np.array([np.linalg.norm(err[3:]), np.linalg.norm(err[:3])])


def newton_ik(
    target: DualQuaternion,
    model: RobotModel,
    q_init: Optional[npt.ArrayLike] = None,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> Array:
    """
    Joint vector reaching a pose, by damped Newton iterations.

    Args:
        target: Desired tool pose
        model: Robot model
        q_init: Starting guess (model seed, else zeros)
        tol: Pose error norm at which to stop
        max_iter: Iteration limit

    Raises:
        IKDivergenceError: If the pose is not reached
    """
    if q_init is None:
        q_init = model.seed if model.seed is not None else np.zeros(model.n)
    q = model.check_q(q_init).copy()
    for it in range(max_iter):
        pose, J = pose_and_jacobian(q, model)
        err = pose_error(target, pose)
        if np.linalg.norm(err) < tol:
            logger.debug(f"Newton IK converged in {it} iterations")
            return q
        step = damped_pinv_solve(J, err, DAMPING)
        norm = float(np.linalg.norm(step))
        if norm > 0.5:
            step *= 0.5 / norm
        q = q + step
    raise IKDivergenceError(f"inverse kinematics did not converge in {max_iter} iterations")


def differential_ik(
    poses: Sequence[DualQuaternion],
    q0: npt.ArrayLike,
    model: RobotModel,
    Ts: float,
    gain: float = FEEDBACK_GAIN,
    damping: float = DAMPING,
    substeps: int = 4,
    manipulability_threshold: float = MANIPULABILITY_THRESHOLD,
    max_error: float = DIVERGENCE_LIMIT,
    progress: Optional[ProgressReporter] = None,
) -> JointTrajectory:
    """
    Track a pose sequence with damped pseudo-inverse differential IK.

    Between consecutive poses the feedforward twist is the screw that carries
    one pose into the next, divided by Ts; a proportional pose-error term keeps
    the integrated joints from drifting. Joint positions are integrated with
    explicit Euler substeps; accelerations and jerks are finite differences.

    Args:
        poses: N+1 tool poses spaced Ts apart
        q0: Joint vector at the first pose
        model: Robot model
        Ts: Node spacing in seconds
        gain: Pose-error feedback gain in 1/s
        damping: Base damping of the pseudo-inverse
        substeps: Euler substeps per interval
        manipulability_threshold: Below this the arm is considered singular
        max_error: Translation error in meters treated as divergence
        progress: Optional progress reporter

    Returns:
        JointTrajectory with per-node tracking errors

    Raises:
        SingularityError: Manipulability below threshold, with node index
        IKDivergenceError: Tracking error above max_error, with node index
    """
    if not Ts > 0:
        raise IKDivergenceError(f"Ts must be positive, got {Ts}")
    if substeps < 1:
        raise IKDivergenceError("at least one integration substep is required")
    N = len(poses) - 1
    q = model.check_q(q0).copy()
    start_error = _errors(poses[0], forward_kinematics(q, model))
    if np.any(start_error > START_TOLERANCE):
        raise IKDivergenceError(
            f"initial configuration is {start_error[0]:.3e} m / {start_error[1]:.3e} rad off the first pose",
            node=0,
        )

    h = Ts / substeps
    q_nodes = np.empty((N + 1, model.n))
    dq_nodes = np.zeros((N + 1, model.n))
    errors = np.zeros((N + 1, 2))

    def joint_rate(desired: DualQuaternion, twist_step: Array, node: int) -> Array:
        pose, J = pose_and_jacobian(q, model)
        err = pose_error(desired, pose)
        if np.linalg.norm(err[3:]) > max_error:
            raise IKDivergenceError(
                f"tracking error {np.linalg.norm(err[3:]):.3e} m exceeds {max_error} m", node=node
            )
        w = manipulability(J)
        if w < manipulability_threshold:
            raise SingularityError(f"manipulability {w:.3e} below {manipulability_threshold}", node=node)
        omega = twist_step[:3] / Ts
        linear = twist_step[3:] / Ts + np.cross(omega, desired.translation)
        feedforward = np.concatenate((omega, linear))
        return damped_pinv_solve(J, feedforward + gain * err, _damping(w, damping))

    reporter = progress or ProgressReporter(verbose=False)
    step = np.zeros(6)
    with reporter.track(N, "Differential IK"):
        for k in range(N):
            q_nodes[k] = q
            errors[k] = _errors(poses[k], forward_kinematics(q, model))
            reporter.set_postfix(error=f"{errors[k, 0]:.1e} m")
            step = (poses[k + 1] * poses[k].inverse()).log()
            for j in range(substeps):
                desired = DualQuaternion.exp((j / substeps) * step) * poses[k]
                rate = joint_rate(desired, step, k)
                if j == 0:
                    dq_nodes[k] = rate
                q = q + h * rate
            reporter.record_success()

    q_nodes[N] = q
    errors[N] = _errors(poses[N], forward_kinematics(q, model))
    dq_nodes[N] = joint_rate(poses[N], step, N)

    if N >= 1:
        ddq = np.gradient(dq_nodes, Ts, axis=0)
        dddq = np.gradient(ddq, Ts, axis=0)
    else:
        ddq = np.zeros_like(dq_nodes)
        dddq = np.zeros_like(dq_nodes)

    logger.info(
        f"Differential IK over {N} intervals: max error {errors[:, 0].max():.3e} m, "
        f"{errors[:, 1].max():.3e} rad"
    )
    return JointTrajectory(
        times=np.arange(N + 1) * Ts,
        q=q_nodes,
        dq=dq_nodes,
        ddq=ddq,
        dddq=dddq,
        position_error=errors[:, 0],
        orientation_error=errors[:, 1],
    )

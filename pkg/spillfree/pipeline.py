"""
Pipeline stages: optimize, simulate, metrics and joint-space mapping.

Each stage takes in-memory data plus settings and returns a result object with
a JSON-ready report. File handling and exit codes belong to the CLI.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
import numpy.typing as npt

from .exceptions import InfeasibleProblemError, NumericalError
from .linear_model import DiscreteModel, build_discrete
from .manipulator.dynamics import LimitEntry, joint_torques, limits_report
from .manipulator.ik import JointTrajectory, differential_ik, newton_ik, poses_from_trajectory
from .manipulator.robot import RobotModel
from .pendulum import PendulumParams, container_forces, simulate, slosh_metrics
from .progress import ProgressReporter
from .qp_builder import QPProblem, TrajectorySpec, assemble
from .qp_solver import Solution, SolveStatus, kkt_residuals, solve
from .settings import SpillfreeSettings
from .trajectory import Trajectory

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


@dataclass
class OptimizeResult:
    """Outcome of one trajectory optimization."""

    spec: TrajectorySpec
    model: DiscreteModel
    problem: QPProblem
    solution: Solution
    trajectory: Optional[Trajectory] = None

    def report(self) -> Dict[str, Any]:
        report = self.solution.to_dict()
        primal, dual = kkt_residuals(self.problem, self.solution)
        report.update(
            N=self.spec.N,
            Ts=self.spec.Ts,
            rod_length=self.model.params.rod_length,
            qp_objective=self.solution.objective,
            objective=self.solution.objective + self.spec.dropped_constant(self.model),
            kkt_primal_residual=primal,
            kkt_dual_residual=dual,
            rows=dict(self.problem.row_groups),
        )
        if self.solution.status is SolveStatus.PRIMAL_INFEASIBLE:
            report["certificate"] = (
                "primal infeasibility certificate found: the pins, waypoints and bounds "
                "admit no trajectory"
            )
        elif self.solution.status is SolveStatus.DUAL_INFEASIBLE:
            report["certificate"] = "dual infeasibility certificate found: the cost is unbounded below"
        return report

    def raise_for_status(self):
        """
        Raises:
            InfeasibleProblemError: On a primal or dual infeasibility certificate
            NumericalError: If the iteration limit was reached
        """
        status = self.solution.status
        if status in (SolveStatus.PRIMAL_INFEASIBLE, SolveStatus.DUAL_INFEASIBLE):
            raise InfeasibleProblemError(f"problem is {status.value}")
        if status is SolveStatus.MAX_ITER:
            raise NumericalError(
                f"solver stopped at the iteration limit ({self.solution.iterations}) "
                f"with residuals {self.solution.primal_residual:.2e}/{self.solution.dual_residual:.2e}"
            )


def optimize(desired: npt.ArrayLike, settings: SpillfreeSettings) -> OptimizeResult:
    """
    Optimize a pivot trajectory whose mass follows the desired one.

    Args:
        desired: (N+1, 6) desired mass positions and velocities on the Ts grid
        settings: Run settings

    Returns:
        OptimizeResult; trajectory is set unless the solve failed
    """
    params = settings.pendulum_params()
    model = build_discrete(params, settings.Ts)
    spec = settings.trajectory_spec(np.asarray(desired, dtype=float))
    logger.info(f"Optimizing {spec.N} intervals at Ts={spec.Ts} s, rod {params.rod_length:.3f} m")
    problem = assemble(model, spec)
    solution = solve(problem, settings.solver)

    result = OptimizeResult(spec=spec, model=model, problem=problem, solution=solution)
    if solution.status in (SolveStatus.OPTIMAL, SolveStatus.MAX_ITER):
        layout = problem.layout
        result.trajectory = Trajectory.from_plan(
            layout.states(solution.chi), layout.inputs(solution.chi), model
        )
    logger.info(f"Optimization finished: {solution.status.value} after {solution.iterations} iterations")
    return result


@dataclass
class SimulateResult:
    """Nonlinear rollout of a plan's inputs."""

    trajectory: Trajectory
    forces: Array
    divergence: Optional[float] = None

    def report(self) -> Dict[str, Any]:
        return {
            "N": self.trajectory.N,
            "Ts": self.trajectory.Ts,
            "max_tilt": float(np.max(np.abs(self.trajectory.states[:, 3:5]))),
            "max_lateral_force": float(np.max(np.hypot(self.forces[:, 0], self.forces[:, 1]))),
            "min_vertical_force": float(np.min(self.forces[:, 2])),
            "mass_position_divergence": self.divergence,
        }


def rollout(
    states: npt.ArrayLike,
    inputs: npt.ArrayLike,
    Ts: float,
    params: PendulumParams,
) -> SimulateResult:
    """
    Replay a plan's inputs through the nonlinear dynamics from its first state.

    The divergence is the largest mass-position gap between the rollout and the
    plan evaluated on the linear model.

    Raises:
        SingularityError: With the interval index
    """
    states = np.asarray(states, dtype=float)
    inputs = np.asarray(inputs, dtype=float).reshape(-1, 3)
    logger.info(f"Simulating {inputs.shape[0]} intervals through the nonlinear model")
    rolled = simulate(states[0], inputs, Ts, params)
    traj = Trajectory.from_rollout(rolled, inputs, Ts, params)
    forces = container_forces(traj, params)

    divergence = None
    if states.shape == rolled.shape:
        plan = Trajectory.from_plan(states, inputs, build_discrete(params, Ts))
        divergence = float(np.max(np.linalg.norm(traj.mass_position - plan.mass_position, axis=1)))
        logger.info(f"Rollout vs plan mass-position divergence: {divergence:.3e} m")
    return SimulateResult(trajectory=traj, forces=forces, divergence=divergence)


def evaluate(traj: Trajectory, params: PendulumParams) -> Dict[str, Any]:
    """
    Slosh metrics, rod tension and motion envelope of a trajectory.

    Raises:
        NumericalError: At a free-fall node
    """
    metrics = slosh_metrics(traj, params)
    tension = container_forces(traj, params)[:, 2]
    slack = [int(k) for k in np.flatnonzero(tension <= 0.0)]
    if slack:
        logger.warning(f"Rod tension non-positive at {len(slack)} nodes, first {slack[0]}")
    report: Dict[str, Any] = {"source": traj.source, "N": traj.N, "Ts": traj.Ts}
    report.update(metrics.to_dict())
    report.update(traj.envelope())
    report["slack_nodes"] = slack
    logger.info(
        f"Metrics ({traj.source}): alignment {metrics.force_alignment_error:.3e}, "
        f"kinematic {metrics.kinematic_error:.3e} m/s^2, max tilt {metrics.max_tilt:.3f} rad"
    )
    return report


def plan_trajectory(states: npt.ArrayLike, inputs: npt.ArrayLike, Ts: float, params: PendulumParams) -> Trajectory:
    """Trajectory of a plan read from disk, evaluated on the linear model."""
    return Trajectory.from_plan(states, inputs, build_discrete(params, Ts))


@dataclass
class JointResult:
    """Joint-space mapping of a trajectory with its limits report."""

    joints: JointTrajectory
    limits: List[LimitEntry]
    q0_source: str
    task_envelope: Dict[str, float] = field(default_factory=dict)

    @property
    def violations(self) -> List[LimitEntry]:
        return [e for e in self.limits if e.violated]

    def report(self) -> Dict[str, Any]:
        return {
            "N": self.joints.N,
            "Ts": self.joints.Ts,
            "q0": self.joints.q[0],
            "q0_source": self.q0_source,
            "tracking": self.joints.tracking_summary(),
            "task_space": self.task_envelope,
            "limits": [e.to_dict() for e in self.limits],
            "violations": [e.to_dict() for e in self.violations],
            "torques": self.joints.tau is not None,
        }


def to_joint_space(
    traj: Trajectory,
    params: PendulumParams,
    model: RobotModel,
    q0: Optional[npt.ArrayLike] = None,
    yaw: float = 0.0,
    progress: Optional[ProgressReporter] = None,
) -> JointResult:
    """
    Map a pendulum trajectory to joint space and evaluate the arm's limits.

    Mass poses become tool poses. Without q0 the start configuration is solved
    by Newton inverse kinematics from the model's seed. Torques are added when
    the model carries inertial parameters.

    Raises:
        SingularityError, IKDivergenceError: With the node index
    """
    poses = poses_from_trajectory(traj, params, yaw)
    if q0 is None:
        logger.info("No initial configuration given; solving inverse kinematics for the first pose")
        q0 = newton_ik(poses[0], model)
        source = "newton_ik"
    else:
        source = "given"

    joints = differential_ik(poses, q0, model, traj.Ts, progress=progress)
    if model.has_dynamics:
        joints = joints.with_torques(joint_torques(joints, model))
    else:
        logger.info(f"Model {model.name!r} has no inertial parameters; torques skipped")
    entries = limits_report(joints, model)

    envelope = traj.envelope()
    task = {
        "max_velocity": envelope["mass_max_velocity"],
        "max_acceleration": envelope["mass_max_acceleration"],
    }
    logger.info(
        f"Joint mapping done: task-space max velocity {task['max_velocity']:.3f} m/s, "
        f"max acceleration {task['max_acceleration']:.3f} m/s^2"
    )
    return JointResult(joints=joints, limits=entries, q0_source=source, task_envelope=task)

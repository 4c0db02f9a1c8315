"""
spillfree - slosh-free trajectory generation.

A carried liquid container is modelled as a point mass on a spherical pendulum
whose pivot is the robot's end effector. Pivot trajectories are optimized with a
sparse quadratic program, verified against the nonlinear pendulum, and mapped
to the joints of a serial arm.
"""

from .exceptions import (
    ConfigError,
    DynamicsUnavailableError,
    IKDivergenceError,
    InfeasibleProblemError,
    InvalidStateError,
    JointLimitError,
    NumericalError,
    SingularityError,
    SpillfreeError,
    TrajectoryFileError,
)
from .linear_model import ContinuousModel, DiscreteModel, build_continuous, build_discrete, discretize_zoh
from .pendulum import (
    MassKinematics,
    PendulumParams,
    SloshMetrics,
    mass_kinematics,
    mass_position,
    nonlinear_accel,
    rod_length_for_validity,
    simulate,
    slosh_metrics,
    step_rk4,
    total_energy,
    validity_error,
)
from .qp_builder import (
    DecisionLayout,
    QPProblem,
    TrajectorySpec,
    assemble,
    build_box_constraints,
    build_boundary_constraints,
    build_cost,
    build_dynamics_constraints,
    build_jerk_constraints,
    dump_problem,
    load_problem,
)
from .qp_solver import ADMMSolver, Solution, SolverSettings, SolveStatus, solve
from .settings import SpillfreeSettings, load_settings
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "ADMMSolver",
    "ConfigError",
    "ContinuousModel",
    "DecisionLayout",
    "DiscreteModel",
    "DynamicsUnavailableError",
    "IKDivergenceError",
    "InfeasibleProblemError",
    "InvalidStateError",
    "JointLimitError",
    "MassKinematics",
    "NumericalError",
    "PendulumParams",
    "QPProblem",
    "SingularityError",
    "SloshMetrics",
    "Solution",
    "SolveStatus",
    "SolverSettings",
    "SpillfreeError",
    "SpillfreeSettings",
    "Trajectory",
    "TrajectoryFileError",
    "TrajectorySpec",
    "assemble",
    "build_box_constraints",
    "build_boundary_constraints",
    "build_continuous",
    "build_cost",
    "build_discrete",
    "build_dynamics_constraints",
    "build_jerk_constraints",
    "discretize_zoh",
    "dump_problem",
    "load_problem",
    "load_settings",
    "mass_kinematics",
    "mass_position",
    "nonlinear_accel",
    "rod_length_for_validity",
    "simulate",
    "slosh_metrics",
    "solve",
    "step_rk4",
    "total_energy",
    "validity_error",
]

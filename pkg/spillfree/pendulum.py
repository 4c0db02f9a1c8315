"""
Spherical pendulum model of a carried liquid container.

The container (with its liquid) is a point mass hanging from a driven pivot on a
rigid, weightless rod. The pivot translates in 3D and its accelerations are the
control input; the rod orientation is described by two superposed planar tilt
angles, theta about the world y axis and phi about the world x axis.

State ordering is fixed::

    [x_p, y_p, z_p, theta, phi, dx_p, dy_p, dz_p, dtheta, dphi]

Provides:
- nonlinear equations of motion and an RK4 integrator with zero-order-hold input
- mass kinematics and energy accounting
- slosh-free condition evaluation (force alignment, kinematic residual)
- point-mass validity relations between rod length and object height
"""

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt

from .exceptions import InvalidStateError, NumericalError, SingularityError

if TYPE_CHECKING:
    from .trajectory import Trajectory

logger = logging.getLogger(__name__)

Vector = npt.NDArray[np.float64]

STATE_DIM = 10
INPUT_DIM = 3
STATE_LABELS = (
    "x_p", "y_p", "z_p", "theta", "phi",
    "dx_p", "dy_p", "dz_p", "dtheta", "dphi",
)
INPUT_LABELS = ("u1", "u2", "u3")

X_P, Y_P, Z_P, THETA, PHI, DX_P, DY_P, DZ_P, DTHETA, DPHI = range(STATE_DIM)

# |cos(theta)| at or below this is treated as the parametrization singularity
SINGULARITY_TOLERANCE = 1e-9
FREE_FALL_TOLERANCE = 1e-12


@dataclass(frozen=True)
class PendulumParams:
    """Physical parameters of the virtual pendulum."""

    rod_length: float
    gravity: float = 9.81
    mass: float = 1.0
    object_height: Optional[float] = None

    def __post_init__(self):
        for name in ("rod_length", "gravity", "mass"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidStateError(f"{name} must be positive, got {value}")
        if self.object_height is not None and (
            not math.isfinite(self.object_height) or self.object_height < 0
        ):
            raise InvalidStateError(
                f"object_height must be non-negative, got {self.object_height}"
            )

    @classmethod
    def from_ratio(cls, object_height: float, ratio: float, **kwargs: Any) -> "PendulumParams":
        """
        Build parameters from the object height and the rod-to-height ratio r.

        Args:
            object_height: Height h of the carried object in meters
            ratio: r = l/h
            **kwargs: gravity and mass

        Returns:
            Parameters with rod_length = r * h
        """
        if object_height <= 0 or ratio <= 0:
            raise InvalidStateError("object_height and ratio must be positive")
        return cls(rod_length=object_height * ratio, object_height=object_height, **kwargs)

    @property
    def ratio(self) -> Optional[float]:
        """Rod-to-object-height ratio, when the object height is known."""
        if not self.object_height:
            return None
        return self.rod_length / self.object_height

    @property
    def natural_frequency(self) -> float:
        """Small-angle angular frequency sqrt(g/l) in rad/s."""
        return math.sqrt(self.gravity / self.rod_length)


@dataclass(frozen=True)
class MassKinematics:
    """World-frame position, velocity and acceleration of the mass."""

    position: Vector
    velocity: Vector
    acceleration: Vector


@dataclass(frozen=True)
class SloshMetrics:
    """Worst-case slosh-free measures over a trajectory."""

    force_alignment_error: float
    kinematic_error: float
    max_tilt: float
    min_rod_tension: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "force_alignment_error": self.force_alignment_error,
            "kinematic_error": self.kinematic_error,
            "max_tilt": self.max_tilt,
            "min_rod_tension": self.min_rod_tension,
        }


def as_state(state: npt.ArrayLike) -> Vector:
    """Validate and convert a state to a float vector of length 10."""
    x = np.asarray(state, dtype=float)
    if x.shape != (STATE_DIM,):
        raise InvalidStateError(f"invalid state: expected {STATE_DIM} entries, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidStateError("invalid state: non-finite entries")
    return x


def as_input(u: npt.ArrayLike) -> Vector:
    """Validate and convert a pivot acceleration command to a float 3-vector."""
    v = np.asarray(u, dtype=float)
    if v.shape != (INPUT_DIM,):
        raise InvalidStateError(f"invalid input: expected {INPUT_DIM} entries, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidStateError("invalid input: non-finite entries")
    return v


def equilibrium(pivot: npt.ArrayLike = (0.0, 0.0, 0.0)) -> Vector:
    """Hanging rest state with the pivot at the given position."""
    x = np.zeros(STATE_DIM)
    x[:3] = np.asarray(pivot, dtype=float)
    return x


def rod_vector(theta: float, phi: float, rod_length: float) -> Vector:
    """Vector from pivot to mass."""
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    return rod_length * np.array([-st, ct * sp, -ct * cp])


def _rod_partials(theta: float, phi: float, rod_length: float) -> Tuple[Vector, ...]:
    # first and second partial derivatives of rod_vector w.r.t. (theta, phi)
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    r_t = np.array([-ct, -st * sp, st * cp])
    r_p = np.array([0.0, ct * cp, ct * sp])
    r_tt = np.array([st, -ct * sp, ct * cp])
    r_tp = np.array([0.0, -st * cp, -st * sp])
    r_pp = np.array([0.0, -ct * sp, ct * cp])
    return tuple(rod_length * v for v in (r_t, r_p, r_tt, r_tp, r_pp))


def mass_position(state: npt.ArrayLike, params: PendulumParams) -> Vector:
    """
    Position of the mass in the world frame.

    Args:
        state: Pendulum state
        params: Pendulum parameters

    Returns:
        [x_p - l sin(theta), y_p + l cos(theta) sin(phi), z_p - l cos(theta) cos(phi)]
    """
    x = as_state(state)
    return x[:3] + rod_vector(x[THETA], x[PHI], params.rod_length)


def mass_velocity(state: npt.ArrayLike, params: PendulumParams) -> Vector:
    """World-frame velocity of the mass (depends on the state only)."""
    x = as_state(state)
    r_t, r_p, *_ = _rod_partials(x[THETA], x[PHI], params.rod_length)
    return x[DX_P:DZ_P + 1] + r_t * x[DTHETA] + r_p * x[DPHI]


def nonlinear_accel(
    state: npt.ArrayLike, u: npt.ArrayLike, params: PendulumParams
) -> Tuple[float, float]:
    """
    Tilt accelerations from the Euler-Lagrange equations of motion.

    Args:
        state: Pendulum state
        u: Pivot accelerations [ddx_p, ddy_p, ddz_p]
        params: Pendulum parameters

    Returns:
        (ddtheta, ddphi) in rad/s^2

    Raises:
        SingularityError: If |cos(theta)| is at or below the singularity tolerance
    """
    x = as_state(state)
    a = as_input(u)
    theta, phi = x[THETA], x[PHI]
    dtheta, dphi = x[DTHETA], x[DPHI]
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    if abs(ct) <= SINGULARITY_TOLERANCE:
        raise SingularityError("parametrization singularity")

    l = params.rod_length
    g_eff = params.gravity + a[2]
    ddtheta = (-st * g_eff * cp + a[0] * ct + a[1] * sp * st - l * ct * st * dphi**2) / l
    ddphi = (-sp * g_eff - a[1] * cp + 2.0 * l * dphi * dtheta * st) / (l * ct)
    return ddtheta, ddphi


def mass_kinematics(
    state: npt.ArrayLike,
    u: npt.ArrayLike,
    params: PendulumParams,
    tilt_accel: Optional[Tuple[float, float]] = None,
) -> MassKinematics:
    """
    Position, velocity and acceleration of the mass.

    The acceleration is the analytic second time derivative of the mass
    position. Tilt accelerations default to the nonlinear equations of motion;
    callers evaluating a planned trajectory may pass the ones their model used.

    Args:
        state: Pendulum state
        u: Pivot accelerations
        params: Pendulum parameters
        tilt_accel: Optional (ddtheta, ddphi) override

    Returns:
        MassKinematics in the world frame
    """
    x = as_state(state)
    a = as_input(u)
    if tilt_accel is None:
        tilt_accel = nonlinear_accel(x, a, params)
    ddtheta, ddphi = tilt_accel
    dtheta, dphi = x[DTHETA], x[DPHI]
    r_t, r_p, r_tt, r_tp, r_pp = _rod_partials(x[THETA], x[PHI], params.rod_length)

    position = x[:3] + rod_vector(x[THETA], x[PHI], params.rod_length)
    velocity = x[DX_P:DZ_P + 1] + r_t * dtheta + r_p * dphi
    acceleration = (
        a
        + r_t * ddtheta
        + r_p * ddphi
        + r_tt * dtheta**2
        + 2.0 * r_tp * dtheta * dphi
        + r_pp * dphi**2
    )
    return MassKinematics(position=position, velocity=velocity, acceleration=acceleration)


def vector_field(state: npt.ArrayLike, u: npt.ArrayLike, params: PendulumParams) -> Vector:
    """Right-hand side of the 10-dim nonlinear ODE."""
    x = as_state(state)
    a = as_input(u)
    ddtheta, ddphi = nonlinear_accel(x, a, params)
    return np.concatenate((x[DX_P:], a, (ddtheta, ddphi)))


def step_rk4(
    state: npt.ArrayLike, u: npt.ArrayLike, dt: float, params: PendulumParams
) -> Vector:
    """
    One classical Runge-Kutta step with the input held constant.

    Args:
        state: Pendulum state at the start of the step
        u: Pivot accelerations held over the step
        dt: Step length in seconds
        params: Pendulum parameters

    Returns:
        State at the end of the step
    """
    if not dt > 0:
        raise InvalidStateError(f"time step must be positive, got {dt}")
    x = as_state(state)
    a = as_input(u)
    k1 = vector_field(x, a, params)
    k2 = vector_field(x + 0.5 * dt * k1, a, params)
    k3 = vector_field(x + 0.5 * dt * k2, a, params)
    k4 = vector_field(x + dt * k3, a, params)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    x0: npt.ArrayLike,
    inputs: npt.ArrayLike,
    Ts: float,
    params: PendulumParams,
    max_substep: float = 1e-3,
) -> npt.NDArray[np.float64]:
    """
    Roll out a zero-order-hold input sequence through the nonlinear dynamics.

    Args:
        x0: Initial state
        inputs: (N, 3) pivot accelerations, one per interval
        Ts: Node spacing in seconds
        params: Pendulum parameters
        max_substep: Largest RK4 step inside one interval

    Returns:
        (N+1, 10) states at the nodes

    Raises:
        SingularityError: With the index of the interval where it occurred
    """
    if not Ts > 0:
        raise InvalidStateError(f"Ts must be positive, got {Ts}")
    u = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    substeps = max(1, math.ceil(Ts / max_substep - 1e-9))
    dt = Ts / substeps

    states = np.empty((u.shape[0] + 1, STATE_DIM))
    states[0] = as_state(x0)
    for k in range(u.shape[0]):
        x = states[k]
        try:
            for _ in range(substeps):
                x = step_rk4(x, u[k], dt, params)
        except SingularityError as e:
            raise SingularityError("parametrization singularity", node=k) from e
        states[k + 1] = x

    logger.debug(f"Simulated {u.shape[0]} intervals with {substeps} RK4 substeps each")
    return states


def total_energy(state: npt.ArrayLike, params: PendulumParams) -> Tuple[float, float]:
    """
    Kinetic and potential energy of the mass.

    Returns:
        (K, U) in joules, with U = m g z_m
    """
    v = mass_velocity(state, params)
    z_m = mass_position(state, params)[2]
    kinetic = 0.5 * params.mass * float(v @ v)
    potential = params.mass * params.gravity * float(z_m)
    return kinetic, potential


def container_rotation(theta: float, phi: float) -> npt.NDArray[np.float64]:
    """
    Orientation of the container frame, R = R_x(phi) R_y(theta).

    The container z axis equals the unit vector from the mass to the pivot.
    """
    st, ct = math.sin(theta), math.cos(theta)
    sp, cp = math.sin(phi), math.cos(phi)
    return np.array([
        [ct, 0.0, st],
        [sp * st, cp, -sp * ct],
        [-cp * st, sp, cp * ct],
    ])


def plane_tilts(theta: npt.ArrayLike, phi: npt.ArrayLike) -> Tuple[Vector, Vector]:
    """
    Tangents of the rod's projected tilt in the x-z and y-z planes.

    The x-z projection has tan = tan(theta)/cos(phi); the y-z projection is phi.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.tan(theta) / np.cos(phi), np.tan(phi)


def slosh_metrics(traj: "Trajectory", params: PendulumParams) -> SloshMetrics:
    """
    Evaluate the slosh-free conditions over a trajectory.

    Args:
        traj: Trajectory carrying states and mass accelerations at every node
        params: Pendulum parameters

    Returns:
        SloshMetrics with worst-case force alignment error, kinematic error,
        tilt and rod tension

    Raises:
        NumericalError: If the external force vanishes at some node
    """
    states = np.asarray(traj.states, dtype=float)
    acc = np.asarray(traj.mass_acceleration, dtype=float)
    g = params.gravity

    force = params.mass * (acc + np.array([0.0, 0.0, g]))
    norms = np.linalg.norm(force, axis=1)
    if np.any(norms < FREE_FALL_TOLERANCE):
        node = int(np.argmax(norms < FREE_FALL_TOLERANCE))
        raise NumericalError(f"free-fall node, alignment undefined (node {node})")

    theta, phi = states[:, THETA], states[:, PHI]
    rotations = np.stack([container_rotation(t, p) for t, p in zip(theta, phi)])
    local = np.einsum("nij,ni->nj", rotations, force)
    alignment = np.hypot(local[:, 0], local[:, 1]) / norms

    tan_xz, tan_yz = plane_tilts(theta, phi)
    vertical = acc[:, 2] + g
    residual_xz = np.abs(vertical * tan_xz - acc[:, 0])
    residual_yz = np.abs(vertical * tan_yz + acc[:, 1])

    return SloshMetrics(
        force_alignment_error=float(np.max(alignment)),
        kinematic_error=float(max(np.max(residual_xz), np.max(residual_yz))),
        max_tilt=float(np.max(np.maximum(np.abs(theta), np.abs(phi)))),
        min_rod_tension=float(np.min(local[:, 2])),
    )


def container_forces(traj: "Trajectory", params: PendulumParams) -> npt.NDArray[np.float64]:
    """(N+1, 3) external force on the mass expressed in the container frame."""
    states = np.asarray(traj.states, dtype=float)
    force = params.mass * (
        np.asarray(traj.mass_acceleration, dtype=float) + np.array([0.0, 0.0, params.gravity])
    )
    rotations = np.stack(
        [container_rotation(t, p) for t, p in zip(states[:, THETA], states[:, PHI])]
    )
    return np.einsum("nij,ni->nj", rotations, force)


def rod_length_for_validity(p: float, object_height: float) -> float:
    """
    Rod length that keeps the point-mass approximation error at p.

    Models the object as a cube of side h, so l = h / sqrt(6 p).
    """
    if p <= 0 or object_height <= 0:
        raise InvalidStateError("approximation error and object height must be positive")
    return object_height / math.sqrt(6.0 * p)


def validity_error(rod_length: float, object_height: float) -> float:
    """Point-mass approximation error p = h^2 / (6 l^2)."""
    if rod_length <= 0 or object_height <= 0:
        raise InvalidStateError("rod length and object height must be positive")
    return object_height**2 / (6.0 * rod_length**2)

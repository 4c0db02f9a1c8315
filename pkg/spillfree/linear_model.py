"""
Linear model of the pendulum about its hanging equilibrium.

First-order Taylor expansion of the equations of motion, continuous state-space
assembly and exact zero-order-hold discretization.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import expm

from .exceptions import InvalidStateError
from .pendulum import (
    DPHI,
    DTHETA,
    INPUT_DIM,
    PHI,
    STATE_DIM,
    THETA,
    PendulumParams,
)

logger = logging.getLogger(__name__)

Matrix = npt.NDArray[np.float64]

OUTPUT_DIM = 6


@dataclass(frozen=True)
class ContinuousModel:
    """x' = A_c x + B_c u, y = C x + output_offset."""

    A_c: Matrix
    B_c: Matrix
    C: Matrix
    output_offset: Matrix
    params: PendulumParams

    @property
    def D(self) -> Matrix:
        return np.zeros((OUTPUT_DIM, INPUT_DIM))


@dataclass(frozen=True)
class DiscreteModel:
    """x_{k+1} = A x_k + B u_k, y_k = C x_k + output_offset."""

    A: Matrix
    B: Matrix
    C: Matrix
    output_offset: Matrix
    Ts: float
    params: PendulumParams

    @property
    def D(self) -> Matrix:
        return np.zeros((OUTPUT_DIM, INPUT_DIM))

    def step(self, x: npt.ArrayLike, u: npt.ArrayLike) -> Matrix:
        return self.A @ np.asarray(x, dtype=float) + self.B @ np.asarray(u, dtype=float)

    def output(self, x: npt.ArrayLike) -> Matrix:
        """Linearized mass position and velocity."""
        return self.C @ np.asarray(x, dtype=float) + self.output_offset

    def tilt_accel(self, x: npt.ArrayLike, u: npt.ArrayLike) -> Matrix:
        """(ddtheta, ddphi) as the linear model sees them."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        l, g = self.params.rod_length, self.params.gravity
        return np.array([(-g * x[THETA] + u[0]) / l, (-g * x[PHI] - u[1]) / l])


def build_continuous(params: PendulumParams) -> ContinuousModel:
    """
    Linearize the equations of motion about the stable equilibrium.

    Args:
        params: Pendulum parameters

    Returns:
        ContinuousModel with l*ddtheta = -g*theta + u1 and l*ddphi = -g*phi - u2
    """
    l, g = params.rod_length, params.gravity

    A_c = np.zeros((STATE_DIM, STATE_DIM))
    A_c[np.arange(5), np.arange(5) + 5] = 1.0
    A_c[DTHETA, THETA] = -g / l
    A_c[DPHI, PHI] = -g / l

    B_c = np.zeros((STATE_DIM, INPUT_DIM))
    B_c[5, 0] = B_c[6, 1] = B_c[7, 2] = 1.0
    B_c[DTHETA, 0] = 1.0 / l
    B_c[DPHI, 1] = -1.0 / l

    # y = [x - l th, y + l ph, z - l, dx - l dth, dy + l dph, dz]
    C = np.zeros((OUTPUT_DIM, STATE_DIM))
    C[0, 0], C[0, THETA] = 1.0, -l
    C[1, 1], C[1, PHI] = 1.0, l
    C[2, 2] = 1.0
    C[3, 5], C[3, DTHETA] = 1.0, -l
    C[4, 6], C[4, DPHI] = 1.0, l
    C[5, 7] = 1.0

    offset = np.zeros(OUTPUT_DIM)
    offset[2] = -l
    return ContinuousModel(A_c=A_c, B_c=B_c, C=C, output_offset=offset, params=params)


def matrix_exponential(M: npt.ArrayLike) -> Matrix:
    """
    Matrix exponential by scaling and squaring with Pade approximation.

    Raises:
        InvalidStateError: For non-square or non-finite input
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidStateError(f"matrix exponential needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidStateError("matrix exponential of a non-finite matrix")
    return expm(M)


def discretize_zoh(cm: ContinuousModel, Ts: float) -> DiscreteModel:
    """
    Zero-order-hold discretization through the augmented matrix exponential.

    exp([[A_c, B_c], [0, 0]] Ts) = [[A, B], [0, I]]

    Args:
        cm: Continuous model
        Ts: Sample time in seconds

    Returns:
        DiscreteModel sharing C and output_offset with cm
    """
    if not Ts > 0:
        raise InvalidStateError(f"Ts must be positive, got {Ts}")
    n, m = cm.B_c.shape
    augmented = np.zeros((n + m, n + m))
    augmented[:n, :n] = cm.A_c
    augmented[:n, n:] = cm.B_c
    phi = matrix_exponential(augmented * Ts)

    logger.debug(f"Discretized model with Ts={Ts} s, l={cm.params.rod_length} m")
    return DiscreteModel(
        A=phi[:n, :n],
        B=phi[:n, n:],
        C=cm.C.copy(),
        output_offset=cm.output_offset.copy(),
        Ts=float(Ts),
        params=cm.params,
    )


def build_discrete(params: PendulumParams, Ts: float) -> DiscreteModel:
    """Linearize and discretize in one call."""
    return discretize_zoh(build_continuous(params), Ts)

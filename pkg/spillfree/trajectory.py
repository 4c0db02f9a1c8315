"""
Time-indexed pendulum trajectories with derived mass kinematics.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
import numpy.typing as npt

from .exceptions import InvalidStateError
from .linear_model import DiscreteModel
from .pendulum import (
    DX_P,
    DZ_P,
    INPUT_DIM,
    STATE_DIM,
    PendulumParams,
    mass_kinematics,
)

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


def _held_inputs(inputs: npt.ArrayLike, nodes: int) -> Array:
    # one input per node; the last node repeats u_{N-1}
    u = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    if u.shape[0] == nodes:
        return u
    if u.shape[0] != nodes - 1:
        raise InvalidStateError(f"expected {nodes - 1} or {nodes} inputs, got {u.shape[0]}")
    return np.vstack((u, u[-1:])) if u.shape[0] else np.zeros((nodes, INPUT_DIM))


@dataclass(frozen=True)
class Trajectory:
    """States, held inputs and mass kinematics at N+1 nodes."""

    times: Array
    states: Array
    inputs: Array
    mass_position: Array
    mass_velocity: Array
    mass_acceleration: Array
    Ts: float
    source: str = "plan"

    @property
    def N(self) -> int:
        return self.states.shape[0] - 1

    @property
    def pivot_velocity(self) -> Array:
        return self.states[:, DX_P:DZ_P + 1]

    @property
    def pivot_jerk(self) -> Array:
        """Finite-difference jerk of the input sequence, one row per interval pair."""
        return np.diff(self.inputs[:-1], axis=0) / self.Ts

    @property
    def mass_jerk(self) -> Array:
        if self.N < 1:
            return np.zeros_like(self.mass_acceleration)
        return np.gradient(self.mass_acceleration, self.Ts, axis=0)

    @classmethod
    def _build(
        cls,
        states: npt.ArrayLike,
        inputs: npt.ArrayLike,
        Ts: float,
        params: PendulumParams,
        source: str,
        model: Optional[DiscreteModel] = None,
    ) -> "Trajectory":
        if not Ts > 0:
            raise InvalidStateError(f"Ts must be positive, got {Ts}")
        states = np.asarray(states, dtype=float)
        if states.ndim != 2 or states.shape[1] != STATE_DIM:
            raise InvalidStateError(f"states must be (N+1, {STATE_DIM}), got {states.shape}")
        held = _held_inputs(inputs, states.shape[0])

        position = np.empty((states.shape[0], 3))
        velocity = np.empty_like(position)
        acceleration = np.empty_like(position)
        for k, (x, u) in enumerate(zip(states, held)):
            tilt = None if model is None else tuple(model.tilt_accel(x, u))
            kin = mass_kinematics(x, u, params, tilt_accel=tilt)
            position[k], velocity[k], acceleration[k] = kin.position, kin.velocity, kin.acceleration

        return cls(
            times=np.arange(states.shape[0]) * Ts,
            states=states,
            inputs=held,
            mass_position=position,
            mass_velocity=velocity,
            mass_acceleration=acceleration,
            Ts=float(Ts),
            source=source,
        )

    @classmethod
    def from_plan(cls, states: npt.ArrayLike, inputs: npt.ArrayLike, model: DiscreteModel) -> "Trajectory":
        """
        Trajectory of an optimized plan.

        Mass kinematics are exact, with tilt accelerations taken from the linear
        model the optimizer used.
        """
        return cls._build(states, inputs, model.Ts, model.params, "plan", model=model)

    @classmethod
    def from_rollout(
        cls, states: npt.ArrayLike, inputs: npt.ArrayLike, Ts: float, params: PendulumParams
    ) -> "Trajectory":
        """Trajectory of a nonlinear rollout; tilt accelerations from the full dynamics."""
        return cls._build(states, inputs, Ts, params, "rollout")

    def envelope(self) -> Dict[str, float]:
        """Peak speeds, accelerations and jerks of pivot and mass."""

        def peak(rows: Array) -> float:
            return float(np.max(np.linalg.norm(rows, axis=1))) if rows.size else 0.0

        return {
            "pivot_max_velocity": peak(self.pivot_velocity),
            "pivot_max_acceleration": peak(self.inputs),
            "pivot_max_jerk": peak(self.pivot_jerk),
            "mass_max_velocity": peak(self.mass_velocity),
            "mass_max_acceleration": peak(self.mass_acceleration),
            "mass_max_jerk": peak(self.mass_jerk),
        }

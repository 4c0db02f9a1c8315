"""
Desired mass trajectories and the bundled demo scenarios.

The step demo moves the mass 0.3 m along x, rest to rest, for rods of r times a
0.1 m cube. The square demo drives the mass around a 0.3 m horizontal square in
front of the bundled 7-DoF arm.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

from .exceptions import ConfigError
from .manipulator.dual_quaternion import DualQuaternion
from .manipulator.ik import newton_ik
from .manipulator.robot import RobotModel, forward_kinematics
from .pendulum import INPUT_DIM
from .settings import SpillfreeSettings

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]

CUBE_SIDE = 0.1
SQUARE_SIDE = 0.3
SQUARE_SEGMENT = 1.2
DEMO_RATIOS = (3.0, 6.0, 9.0)

# pivot limits of the bundled arm's Cartesian interface, with tilt kept under 45 deg
PIVOT_VELOCITY_LIMIT = 1.7
PIVOT_ACCEL_LIMIT = 13.0
PIVOT_JERK_LIMIT = 6500.0
TILT_LIMIT = np.pi / 4
TILT_RATE_LIMIT = np.pi


def minimum_jerk(s: npt.ArrayLike) -> Tuple[Array, Array]:
    """Normalized minimum-jerk blend 10s^3 - 15s^4 + 6s^5 and its derivative in s."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2), 30.0 * s**2 * (1.0 - s) ** 2


def minimum_jerk_segment(start: npt.ArrayLike, goal: npt.ArrayLike, nodes: int, Ts: float) -> Array:
    """
    Rest-to-rest minimum-jerk segment sampled at nodes+1 points.

    Returns:
        (nodes+1, 6) rows of [position, velocity]
    """
    if nodes < 1:
        raise ConfigError("a segment needs at least one interval")
    start = np.asarray(start, dtype=float)
    delta = np.asarray(goal, dtype=float) - start
    duration = nodes * Ts
    blend, rate = minimum_jerk(np.arange(nodes + 1) / nodes)
    positions = start + np.outer(blend, delta)
    velocities = np.outer(rate, delta) / duration
    return np.hstack((positions, velocities))


def minimum_jerk_path(corners: Sequence[npt.ArrayLike], segment_nodes: int, Ts: float) -> Array:
    """
    Chain minimum-jerk segments through a list of corners, stopping at each.

    Returns:
        (len(corners)-1) * segment_nodes + 1 rows of [position, velocity]
    """
    if len(corners) < 2:
        raise ConfigError("a path needs at least two corners")
    rows: List[Array] = []
    for a, b in zip(corners[:-1], corners[1:]):
        segment = minimum_jerk_segment(a, b, segment_nodes, Ts)
        rows.append(segment if not rows else segment[1:])
    return np.vstack(rows)


def panda_bounds() -> dict:
    """Loose bounds: pivot velocity, acceleration and jerk limits plus tilt limits."""
    inf = float("inf")
    state = [inf, inf, inf, TILT_LIMIT, TILT_LIMIT] + [PIVOT_VELOCITY_LIMIT] * 3 + [TILT_RATE_LIMIT] * 2
    return {
        "state_lower": [-v for v in state],
        "state_upper": state,
        "input_lower": [-PIVOT_ACCEL_LIMIT] * INPUT_DIM,
        "input_upper": [PIVOT_ACCEL_LIMIT] * INPUT_DIM,
        "jerk_lower": [-PIVOT_JERK_LIMIT] * INPUT_DIM,
        "jerk_upper": [PIVOT_JERK_LIMIT] * INPUT_DIM,
    }


def demo_settings(base: SpillfreeSettings, **updates) -> SpillfreeSettings:
    """Copy of base with the loose demo bounds unless bounds were configured."""
    data = base.model_dump()
    if "bounds" not in base.model_fields_set:
        data["bounds"] = panda_bounds()
    data.update(updates)
    return SpillfreeSettings(**data)


def step_settings(ratio: float, base: SpillfreeSettings) -> SpillfreeSettings:
    """Settings of the step demo for one rod-to-height ratio r (rod = r * 0.1 m)."""
    return demo_settings(base, rod_length=None, object_height=CUBE_SIDE, ratio=ratio)


def step_desired(settings: SpillfreeSettings) -> Array:
    """
    Desired mass trajectory of the step demo.

    The mass hangs at rest below a pivot at the origin. With the hard profile
    the target jumps settings.step meters along x right after the first node
    and stays there at rest; the smooth profile ramps to it along a
    minimum-jerk segment spanning the horizon.
    """
    params = settings.pendulum_params()
    nodes = max(1, int(round(settings.horizon / settings.Ts)))
    start = np.array([0.0, 0.0, -params.rod_length])
    goal = start + np.array([settings.step, 0.0, 0.0])
    if settings.step_profile == "smooth":
        desired = minimum_jerk_segment(start, goal, nodes, settings.Ts)
    else:
        desired = np.zeros((nodes + 1, 6))
        desired[0, :3] = start
        desired[1:, :3] = goal
    logger.info(
        f"Step scenario ({settings.step_profile}): {settings.step} m over "
        f"{nodes * settings.Ts:.3f} s, rod {params.rod_length:.3f} m"
    )
    return desired


@dataclass(frozen=True)
class SquareScenario:
    """Desired mass path of the square demo and the arm's starting joints."""

    desired: Array
    q0: Array
    corners: Array


def square_corners(center: npt.ArrayLike, side: float = SQUARE_SIDE) -> Array:
    """Closed horizontal square, counter-clockwise from the (-x, -y) corner."""
    c = np.asarray(center, dtype=float)
    h = side / 2.0
    offsets = [(-h, -h), (h, -h), (h, h), (-h, h), (-h, -h)]
    return np.array([c + np.array([dx, dy, 0.0]) for dx, dy in offsets])


def square_scenario(settings: SpillfreeSettings, model: RobotModel) -> SquareScenario:
    """
    Square demo on the arm.

    The square is centered half a side ahead (+x) of the tool position at the
    model's seed configuration; the initial joints come from Newton IK to the
    first corner with the container upright.
    """
    seed = model.seed if model.seed is not None else np.zeros(model.n)
    home = forward_kinematics(seed, model).translation
    corners = square_corners(home + np.array([SQUARE_SIDE / 2.0, 0.0, 0.0]))
    nodes = max(1, int(round(SQUARE_SEGMENT / settings.Ts)))
    desired = minimum_jerk_path(corners, nodes, settings.Ts)

    if settings.q0 is not None:
        q0 = model.check_q(settings.q0)
    else:
        start = DualQuaternion.from_rotation_translation(Rotation.from_euler("z", settings.yaw), corners[0])
        q0 = newton_ik(start, model, seed)
    logger.info(f"Square scenario: {len(corners) - 1} sides of {nodes} intervals around {corners[0]}")
    return SquareScenario(desired=desired, q0=q0, corners=corners)


import math
from pathlib import Path

import numpy as np
import pytest

from spillfree.linear_model import build_discrete
from spillfree.manipulator.robot import RobotModel, RobotSchema
from spillfree.pendulum import PendulumParams

ROOT = Path(__file__).resolve().parent.parent
PANDA = ROOT / "config" / "panda.json"


def planar_arm(links, masses=None, name="planar"):
    """
    Revolute arm with its first axis along world z and the rest parallel to it.

    Each link is a straight bar of the given length along its frame's x axis.
    With masses, each link carries a point-like mass at its tip plus a small
    rotational inertia.
    """
    joints = []
    for i, _ in enumerate(links):
        a = 0.0 if i == 0 else links[i - 1]
        joints.append({"dh": {"a": a, "d": 0.0, "alpha": 0.0}})
    schema = {
        "name": name,
        "joints": joints,
        "flange": {"xyz": [links[-1], 0.0, 0.0]},
    }
    if masses is not None:
        schema["inertia"] = [
            {"mass": m, "com": [l, 0.0, 0.0], "inertia": [0.01, 0.0, 0.0, 0.02, 0.0, 0.03]}
            for m, l in zip(masses, links)
        ]
    return RobotModel.from_schema(RobotSchema.model_validate(schema))


def vertical_arm():
    """Two-joint arm whose axes are horizontal, so gravity loads both joints."""
    schema = {
        "name": "vertical",
        "joints": [
            {"dh": {"a": 0.0, "d": 0.1, "alpha": math.pi / 2}},
            {"dh": {"a": 0.4, "d": 0.05, "alpha": 0.0}},
        ],
        "flange": {"xyz": [0.3, 0.0, 0.0]},
        "inertia": [
            {"mass": 2.0, "com": [0.2, 0.01, -0.02], "inertia": [0.02, 0.001, 0.0, 0.03, 0.002, 0.04]},
            {"mass": 1.5, "com": [0.15, -0.02, 0.01], "inertia": [0.01, 0.0, 0.001, 0.02, 0.0, 0.015]},
        ],
    }
    return RobotModel.from_schema(RobotSchema.model_validate(schema))


@pytest.fixture
def params():
    return PendulumParams(rod_length=0.6)


@pytest.fixture
def model(params):
    return build_discrete(params, 0.033)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def panda():
    return RobotModel.load(PANDA)


@pytest.fixture
def arm1():
    return planar_arm([0.5])


@pytest.fixture
def arm2():
    return planar_arm([0.4, 0.3], masses=[1.0, 0.5])


@pytest.fixture
def arm_vertical():
    return vertical_arm()

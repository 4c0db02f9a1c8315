"""
Serial manipulator model: modified Denavit-Hartenberg kinematics, limits and
optional inertial parameters, loaded from JSON model files.
"""

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
from pydantic import BaseModel, Field, ValidationError, model_validator
from scipy.spatial.transform import Rotation

from ..exceptions import ConfigError, InvalidStateError
from .dual_quaternion import DualQuaternion, skew

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]


class DHSchema(BaseModel):
    a: float = 0.0
    d: float = 0.0
    alpha: float = 0.0
    theta_offset: float = 0.0


class JointLimitSchema(BaseModel):
    q_min: float = -np.inf
    q_max: float = np.inf
    dq: float = np.inf
    ddq: float = np.inf
    dddq: float = np.inf
    tau: float = np.inf

    @model_validator(mode="after")
    def check_order(self):
        if self.q_min > self.q_max:
            raise ValueError("q_min exceeds q_max")
        return self


class JointSchema(BaseModel):
    type: str = "revolute"
    dh: DHSchema
    limits: JointLimitSchema = JointLimitSchema()

    @model_validator(mode="after")
    def check_type(self):
        if self.type != "revolute":
            raise ValueError(f"unsupported joint type {self.type!r}")
        return self


class InertiaSchema(BaseModel):
    mass: float = Field(ge=0)
    com: Tuple[float, float, float]
    # ixx, ixy, ixz, iyy, iyz, izz about the center of mass, link frame axes
    inertia: Tuple[float, float, float, float, float, float]


class FrameSchema(BaseModel):
    xyz: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    rpy: Tuple[float, float, float] = (0.0, 0.0, 0.0)


class RobotSchema(BaseModel):
    name: str = "robot"
    joints: List[JointSchema] = Field(min_length=1)
    flange: FrameSchema = FrameSchema()
    tool: FrameSchema = FrameSchema()
    inertia: Optional[List[InertiaSchema]] = None
    seed: Optional[List[float]] = None

    @model_validator(mode="after")
    def check_lengths(self):
        n = len(self.joints)
        if self.inertia is not None and len(self.inertia) != n:
            raise ValueError(f"inertia has {len(self.inertia)} entries for {n} joints")
        if self.seed is not None and len(self.seed) != n:
            raise ValueError(f"seed has {len(self.seed)} entries for {n} joints")
        return self


@dataclass(frozen=True)
class DHJoint:
    a: float
    d: float
    alpha: float
    theta_offset: float = 0.0

    def transform(self, q: float) -> DualQuaternion:
        """Rot_x(alpha) Trans_x(a) Rot_z(q + offset) Trans_z(d)."""
        return (
            DualQuaternion.rot_x(self.alpha)
            * DualQuaternion.trans(x=self.a)
            * DualQuaternion.rot_z(q + self.theta_offset)
            * DualQuaternion.trans(z=self.d)
        )


@dataclass(frozen=True)
class JointLimits:
    q_min: Array
    q_max: Array
    dq: Array
    ddq: Array
    dddq: Array
    tau: Array


@dataclass(frozen=True)
class LinkInertia:
    """Mass, center of mass and inertia tensor about the COM, in the link frame."""

    mass: float
    com: Array
    inertia: Array


def _frame(schema: FrameSchema) -> DualQuaternion:
    return DualQuaternion.from_rotation_translation(
        Rotation.from_euler("xyz", schema.rpy), schema.xyz
    )


def _inertia_matrix(values: Tuple[float, ...]) -> Array:
    ixx, ixy, ixz, iyy, iyz, izz = values
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


@dataclass(frozen=True)
class RobotModel:
    """Immutable kinematic and dynamic description of a serial arm."""

    name: str
    joints: Tuple[DHJoint, ...]
    limits: JointLimits
    flange: DualQuaternion
    tool: DualQuaternion
    inertia: Optional[Tuple[LinkInertia, ...]] = None
    seed: Optional[Array] = None

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def has_dynamics(self) -> bool:
        return self.inertia is not None

    @property
    def end_effector(self) -> DualQuaternion:
        """Tool pose in the last link frame."""
        return self.flange * self.tool

    @classmethod
    def from_schema(cls, schema: RobotSchema) -> "RobotModel":
        joints = tuple(DHJoint(j.dh.a, j.dh.d, j.dh.alpha, j.dh.theta_offset) for j in schema.joints)

        def column(name: str) -> Array:
            return np.array([getattr(j.limits, name) for j in schema.joints], dtype=float)

        limits = JointLimits(*(column(name) for name in ("q_min", "q_max", "dq", "ddq", "dddq", "tau")))
        inertia = None
        if schema.inertia is not None:
            inertia = tuple(
                LinkInertia(i.mass, np.array(i.com, dtype=float), _inertia_matrix(i.inertia))
                for i in schema.inertia
            )
        return cls(
            name=schema.name,
            joints=joints,
            limits=limits,
            flange=_frame(schema.flange),
            tool=_frame(schema.tool),
            inertia=inertia,
            seed=None if schema.seed is None else np.array(schema.seed, dtype=float),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RobotModel":
        """
        Load a robot model file.

        Raises:
            ConfigError: If the file is missing or fails validation
        """
        path = Path(path)
        try:
            schema = RobotSchema.model_validate(json.loads(path.read_text()))
        except OSError as e:
            raise ConfigError(f"cannot read robot model {path}: {e}") from e
        except (json.JSONDecodeError, ValidationError) as e:
            raise ConfigError(f"invalid robot model {path}: {e}") from e
        model = cls.from_schema(schema)
        logger.info(f"Loaded robot model {model.name!r} with {model.n} joints from {path}")
        return model

    def check_q(self, q: npt.ArrayLike) -> Array:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n,):
            raise InvalidStateError(f"expected {self.n} joint values, got shape {q.shape}")
        if not np.all(np.isfinite(q)):
            raise InvalidStateError("joint vector has non-finite entries")
        return q

    def with_payload(self, mass: float, offset: npt.ArrayLike = (0.0, 0.0, 0.0)) -> "RobotModel":
        """
        Attach a point mass to the last link.

        Args:
            mass: Payload mass in kg
            offset: Payload position in the tool frame

        Returns:
            A new model whose last link carries the combined inertia
        """
        if not self.has_dynamics:
            return self
        if mass <= 0:
            return self
        tool = self.end_effector
        p = tool.rotation.apply(np.asarray(offset, dtype=float)) + tool.translation

        last = self.inertia[-1]
        total = last.mass + mass
        com = (last.mass * last.com + mass * p) / total

        def shift(m: float, r: Array) -> Array:
            return m * (float(r @ r) * np.eye(3) - np.outer(r, r))

        inertia = last.inertia + shift(last.mass, last.com - com) + shift(mass, p - com)
        links = self.inertia[:-1] + (LinkInertia(total, com, inertia),)
        logger.debug(f"Attached {mass} kg payload at {p} in the last link frame")
        return replace(self, inertia=links)


def link_frames(q: npt.ArrayLike, model: RobotModel) -> List[DualQuaternion]:
    """World poses of the joint frames 1..n (each frame's z is its joint axis)."""
    q = model.check_q(q)
    if np.any(q < model.limits.q_min) or np.any(q > model.limits.q_max):
        logger.warning("Joint vector outside position limits")
    frames = []
    pose = DualQuaternion.identity()
    for joint, qi in zip(model.joints, q):
        pose = pose * joint.transform(qi)
        frames.append(pose)
    return frames


def forward_kinematics(q: npt.ArrayLike, model: RobotModel) -> DualQuaternion:
    """
    Tool pose for a joint vector.

    Args:
        q: Joint positions (n,)
        model: Robot model

    Returns:
        Unit dual quaternion of the tool frame in the base frame
    """
    return link_frames(q, model)[-1] * model.end_effector


def geometric_jacobian(q: npt.ArrayLike, model: RobotModel) -> Array:
    """
    World-frame twist Jacobian, angular rows over linear rows.

    Column i is (z_i, z_i x (p_ee - p_i)).
    """
    return pose_and_jacobian(q, model)[1]


def pose_and_jacobian(q: npt.ArrayLike, model: RobotModel) -> Tuple[DualQuaternion, Array]:
    """Tool pose and twist Jacobian from one pass over the joint frames."""
    frames = link_frames(q, model)
    pose = frames[-1] * model.end_effector
    p_ee = pose.translation
    J = np.empty((6, model.n))
    for i, frame in enumerate(frames):
        z = frame.rotation.apply([0.0, 0.0, 1.0])
        J[:3, i] = z
        J[3:, i] = skew(z) @ (p_ee - frame.translation)
    return pose, J


def manipulability(J: npt.ArrayLike) -> float:
    """Yoshikawa measure sqrt(det(J J')), on J' J for arms with fewer than 6 joints."""
    J = np.asarray(J, dtype=float)
    gram = J @ J.T if J.shape[1] >= J.shape[0] else J.T @ J
    return float(np.sqrt(max(np.linalg.det(gram), 0.0)))

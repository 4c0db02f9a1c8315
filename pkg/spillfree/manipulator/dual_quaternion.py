"""
Unit dual quaternions for rigid-body poses.

Quaternions are stored scalar-first, [w, x, y, z]. A pose with rotation r and
translation t is r + eps * (1/2) t r.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import numpy.typing as npt
from scipy.spatial.transform import Rotation

Array = npt.NDArray[np.float64]

UNIT_TOLERANCE = 1e-9


def qmul(a: Array, b: Array) -> Array:
    """Hamilton product of two [w, x, y, z] quaternions."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def qconj(a: Array) -> Array:
    return np.array([a[0], -a[1], -a[2], -a[3]])


def skew(v: Array) -> Array:
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def _se3_left_jacobian(omega: Array) -> Array:
    # V in exp([omega, v]) = (exp(omega), V v)
    theta = float(np.linalg.norm(omega))
    W = skew(omega)
    if theta < 1e-8:
        return np.eye(3) + 0.5 * W + W @ W / 6.0
    return (
        np.eye(3)
        + (1.0 - math.cos(theta)) / theta**2 * W
        + (theta - math.sin(theta)) / theta**3 * W @ W
    )


@dataclass(frozen=True)
class DualQuaternion:
    """Rigid pose as a dual quaternion (real, dual)."""

    real: Array
    dual: Array

    @classmethod
    def identity(cls) -> "DualQuaternion":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(4))

    @classmethod
    def from_rotation_translation(
        cls, rotation: Rotation, translation: npt.ArrayLike = (0.0, 0.0, 0.0)
    ) -> "DualQuaternion":
        x, y, z, w = rotation.as_quat()
        real = np.array([w, x, y, z])
        t = np.concatenate(([0.0], np.asarray(translation, dtype=float)))
        return cls(real, 0.5 * qmul(t, real))

    @classmethod
    def from_matrix(cls, T: npt.ArrayLike) -> "DualQuaternion":
        T = np.asarray(T, dtype=float)
        return cls.from_rotation_translation(Rotation.from_matrix(T[:3, :3]), T[:3, 3])

    @classmethod
    def rot_x(cls, angle: float) -> "DualQuaternion":
        return cls(np.array([math.cos(angle / 2), math.sin(angle / 2), 0.0, 0.0]), np.zeros(4))

    @classmethod
    def rot_z(cls, angle: float) -> "DualQuaternion":
        return cls(np.array([math.cos(angle / 2), 0.0, 0.0, math.sin(angle / 2)]), np.zeros(4))

    @classmethod
    def trans(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "DualQuaternion":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]), 0.5 * np.array([0.0, x, y, z]))

    @classmethod
    def exp(cls, twist: npt.ArrayLike) -> "DualQuaternion":
        """Pose reached by a constant spatial twist (omega, v) in unit time."""
        twist = np.asarray(twist, dtype=float)
        omega, v = twist[:3], twist[3:]
        return cls.from_rotation_translation(
            Rotation.from_rotvec(omega), _se3_left_jacobian(omega) @ v
        )

    def __mul__(self, other: "DualQuaternion") -> "DualQuaternion":
        return DualQuaternion(
            qmul(self.real, other.real),
            qmul(self.real, other.dual) + qmul(self.dual, other.real),
        )

    def conjugate(self) -> "DualQuaternion":
        return DualQuaternion(qconj(self.real), qconj(self.dual))

    def inverse(self) -> "DualQuaternion":
        """Inverse of a unit dual quaternion."""
        return self.conjugate()

    def normalized(self) -> "DualQuaternion":
        norm = float(np.linalg.norm(self.real))
        real = self.real / norm
        dual = self.dual / norm
        dual = dual - real * float(real @ dual)
        return DualQuaternion(real, dual)

    @property
    def rotation(self) -> Rotation:
        w, x, y, z = self.real
        return Rotation.from_quat([x, y, z, w])

    @property
    def translation(self) -> Array:
        return 2.0 * qmul(self.dual, qconj(self.real))[1:]

    def rotation_matrix(self) -> Array:
        return self.rotation.as_matrix()

    def to_matrix(self) -> Array:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.translation
        return T

    def as_array(self) -> Array:
        return np.concatenate((self.real, self.dual))

    def unit_errors(self) -> Tuple[float, float]:
        """(|‖real‖ - 1|, |real·dual|); both vanish for a valid pose."""
        return abs(float(np.linalg.norm(self.real)) - 1.0), abs(float(self.real @ self.dual))

    def is_unit(self, tol: float = UNIT_TOLERANCE) -> bool:
        norm_error, plucker_error = self.unit_errors()
        return norm_error <= tol and plucker_error <= tol

    def log(self) -> Array:
        """Spatial twist (omega, v) with DualQuaternion.exp(twist) == self."""
        omega = self.rotation.as_rotvec()
        v = np.linalg.solve(_se3_left_jacobian(omega), self.translation)
        return np.concatenate((omega, v))


def pose_error(target: DualQuaternion, current: DualQuaternion) -> Array:
    """
    Twist-like error (angular, linear) from current to target in the world frame.

    The angular part is the rotation vector of R_target R_current'; the linear
    part is the translation difference.
    """
    rot = target.rotation * current.rotation.inv()
    return np.concatenate((rot.as_rotvec(), target.translation - current.translation))

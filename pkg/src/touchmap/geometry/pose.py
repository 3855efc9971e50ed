"""Rigid transforms in SE(3). All lengths in meters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class RigidPose:
    """Rotation + translation mapping local coordinates into the world frame.

    ``rotation`` columns are the local frame axes expressed in world
    coordinates; must be orthonormal with determinant +1.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError("rotation must be a 3x3 matrix")
        if not np.allclose(R.T @ R, np.eye(3), atol=_ORTHO_TOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1 (no reflections)")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidPose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_z_axis(cls, position, z_axis) -> "RigidPose":
        """Build a pose at ``position`` whose local z axis is ``z_axis``.

        The x/y axes complete a right-handed frame deterministically (x is
        chosen orthogonal to the world axis least aligned with z).
        """
        z = np.asarray(z_axis, dtype=np.float64)
        z = z / np.linalg.norm(z)
        helper = np.zeros(3)
        helper[int(np.argmin(np.abs(z)))] = 1.0
        x = np.cross(helper, z)
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return cls(np.column_stack([x, y, z]), np.asarray(position, dtype=np.float64))

    @property
    def z_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    def transform_points(self, points: np.ndarray) -> np.ndarray:
        """Map local points (..., 3) into the world frame."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def transform_dirs(self, dirs: np.ndarray) -> np.ndarray:
        """Rotate local direction vectors (..., 3) into the world frame."""
        return np.asarray(dirs, dtype=np.float64) @ self.rotation.T

    def inverse_points(self, points: np.ndarray) -> np.ndarray:
        """Map world points into the local frame."""
        p = np.asarray(points, dtype=np.float64)
        return (p - self.translation) @ self.rotation

    def inverse(self) -> "RigidPose":
        return RigidPose(self.rotation.T, -self.rotation.T @ self.translation)

    def matrix(self) -> np.ndarray:
        """Row-major 3x4 matrix [R | t]."""
        return np.hstack([self.rotation, self.translation[:, None]])

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "RigidPose":
        m = np.asarray(m, dtype=np.float64).reshape(3, 4)
        return cls(m[:, :3], m[:, 3])


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> RigidPose:
    """Camera pose at ``position`` with local +z pointing at ``target``.

    Local x is the image column direction, local y the row direction
    (y roughly opposite ``up``).
    """
    position = np.asarray(position, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - position
    n = np.linalg.norm(forward)
    if n == 0:
        raise ValueError("camera position coincides with target")
    forward /= n
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(forward, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(forward, np.array([0.0, 1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(forward, x)
    return RigidPose(np.column_stack([x, y, forward]), position)

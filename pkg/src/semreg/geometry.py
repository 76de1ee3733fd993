"""Rigid transforms and small rotation helpers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

Points: TypeAlias = NDArray[np.float64]  # (N, 3)
Mat3: TypeAlias = NDArray[np.float64]
Vec3: TypeAlias = NDArray[np.float64]

ORTHO_TOL = 1e-9


def project_to_so3(M: Mat3) -> Mat3:
    """Nearest proper rotation to ``M`` in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def rot_z(angle_rad: float) -> Mat3:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle_rad: float) -> Mat3:
    """Rodrigues formula."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle_rad) * K + (1.0 - np.cos(angle_rad)) * (K @ K)


def random_rotation(rng: np.random.Generator) -> Mat3:
    """Uniformly distributed rotation (via a random unit quaternion)."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    R = np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
    return project_to_so3(R)


def rotation_angle_deg(R: Mat3) -> float:
    """Geodesic angle ``arccos((tr R - 1) / 2)`` of a rotation, in degrees.

    Evaluated as ``atan2(sin, cos)`` so that angles near zero keep full
    precision (plain arccos bottoms out around 1e-6 degrees).
    """
    R = np.asarray(R, dtype=np.float64)
    c = (np.trace(R) - 1.0) / 2.0
    s = 0.5 * np.linalg.norm([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return float(np.degrees(np.arctan2(s, c)))


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): ``x -> rotation @ x + translation``."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise ValueError("pose contains non-finite entries")
        if np.linalg.norm(R.T @ R - np.eye(3)) >= ORTHO_TOL or abs(np.linalg.det(R) - 1.0) >= ORTHO_TOL:
            raise ValueError("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> Pose:
        T = np.asarray(T, dtype=np.float64)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> NDArray[np.float64]:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def inverse(self) -> Pose:
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other: Pose) -> Pose:
        """Composition: ``(self @ other)(x) == self(other(x))``."""
        R = self.rotation @ other.rotation
        # Keep long compositions on the manifold.
        if np.linalg.norm(R.T @ R - np.eye(3)) > 1e-12:
            R = project_to_so3(R)
        return Pose(R, self.rotation @ other.translation + self.translation)

    def apply(self, points) -> Points:
        P = np.asarray(points, dtype=np.float64)
        return P @ self.rotation.T + self.translation

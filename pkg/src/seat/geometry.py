"""Rigid transforms: positions in meters, unit quaternions in (x, y, z, w) order.

Quaternions are canonicalized to w >= 0 at construction so that equality
tests and file round-trips are deterministic under the double cover.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError

UNIT_TOL = 1e-6


def _canonicalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n < UNIT_TOL:
        raise InvalidArgumentError(f"zero-norm quaternion {q}")
    q = q / n
    # w >= 0; on the w == 0 great circle pick the first nonzero component positive
    if q[3] < 0:
        q = -q
    elif q[3] == 0:
        nz = np.nonzero(q)[0]
        if nz.size and q[nz[0]] < 0:
            q = -q
    return q


def quat_normalize(q) -> np.ndarray:
    return _canonicalize(np.asarray(q, dtype=np.float64))


def quat_multiply(q1, q2) -> np.ndarray:
    """Hamilton product q1 * q2, both (x, y, z, w)."""
    x1, y1, z1, w1 = q1
    x2, y2, z2, w2 = q2
    return np.array(
        [
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0:
        raise InvalidArgumentError("zero rotation axis")
    half = 0.5 * angle
    return _canonicalize(np.append(np.sin(half) * axis / n, np.cos(half)))


def quat_to_matrix(q) -> np.ndarray:
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_rotate(q, points) -> np.ndarray:
    """Rotate one point or an (N, 3) array by quaternion q."""
    return np.asarray(points, dtype=np.float64) @ quat_to_matrix(q).T


def _check_unit(q: np.ndarray, name: str) -> None:
    if abs(np.linalg.norm(q) - 1.0) > UNIT_TOL:
        raise InvalidArgumentError(f"{name} is not a unit quaternion: |q|={np.linalg.norm(q)}")


def quat_geodesic(q1, q2) -> float:
    """Geodesic angle between two unit quaternions, arccos(2(q1.q2)^2 - 1) in [0, pi].

    Sign-invariant: q and -q represent the same rotation. Evaluated through the
    relative quaternion with atan2 so the result is exact near 0 and pi.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    _check_unit(q1, "q1")
    _check_unit(q2, "q2")
    rel = quat_multiply(q1, quat_conjugate(q2))
    return float(2.0 * np.arctan2(np.linalg.norm(rel[:3]), abs(rel[3])))


def yaw_pitch_roll_quat(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Compose Rz(yaw) * Ry(pitch) * Rx(roll) as a quaternion."""
    qz = quat_from_axis_angle([0, 0, 1], yaw)
    qy = quat_from_axis_angle([0, 1, 0], pitch)
    qx = quat_from_axis_angle([1, 0, 0], roll)
    return _canonicalize(quat_multiply(quat_multiply(qz, qy), qx))


IDENTITY_QUAT = np.array([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Pose:
    """Rigid transform: translation p (meters) and unit quaternion q (x, y, z, w)."""

    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64).reshape(3)
        q = _canonicalize(np.asarray(self.q, dtype=np.float64).reshape(4))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        p.setflags(write=False)
        q.setflags(write=False)

    @staticmethod
    def identity() -> "Pose":
        return Pose()

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = quat_to_matrix(self.q)
        m[:3, 3] = self.p
        return m

    def apply(self, points) -> np.ndarray:
        """Transform one point or an (N, 3) array into the parent frame."""
        return quat_rotate(self.q, points) + self.p

    def compose(self, other: "Pose") -> "Pose":
        """self * other: apply other in self's local frame."""
        return Pose(self.p + quat_rotate(self.q, other.p), quat_multiply(self.q, other.q))

    def inverse(self) -> "Pose":
        qi = quat_conjugate(self.q)
        return Pose(-quat_rotate(qi, self.p), qi)

    def to_dict(self) -> dict:
        return {"p": [float(v) for v in self.p], "q": [float(v) for v in self.q]}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.asarray(d["p"], dtype=np.float64), np.asarray(d["q"], dtype=np.float64))

    def almost_equal(self, other: "Pose", pos_tol: float = 1e-9, rot_tol: float = 1e-7) -> bool:
        return bool(
            np.linalg.norm(self.p - other.p) <= pos_tol
            and quat_geodesic(self.q, other.q) <= rot_tol
        )


def pose_compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def pose_inverse(a: Pose) -> Pose:
    return a.inverse()


def position_error(p1, p2) -> float:
    """L2 distance between two positions, meters."""
    return float(np.linalg.norm(np.asarray(p1, dtype=np.float64) - np.asarray(p2, dtype=np.float64)))

"""Rotation and rigid-transform algebra built on screw coordinates.

Screw vectors are ordered (omega, v): angular part first, linear part second.
All angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-9
GIMBAL_TOL = 1e-9


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


def skew(w) -> np.ndarray:
    """Skew-symmetric matrix [w] such that [w] @ x == cross(w, x)."""
    return np.array(
        [[0.0, -w[2], w[1]],
         [w[2], 0.0, -w[0]],
         [-w[1], w[0], 0.0]]
    )


def unskew(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    two_pi = 2.0 * np.pi
    # In-range values pass through untouched; others lose whole turns.
    k = np.where((a > -np.pi) & (a <= np.pi), 0.0, np.floor((a + np.pi) / two_pi))
    out = a - k * two_pi
    out = np.where(out <= -np.pi, out + two_pi, out)
    out = np.where(out > np.pi, out - two_pi, out)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Pose of a frame: x_parent = R @ x_child + p."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=float).reshape(3, 3)
        p = np.array(self.p, dtype=float).reshape(3)
        R.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "p", p)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_matrix(cls, T) -> RigidTransform:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, p) -> RigidTransform:
        return cls(np.eye(3), p)

    @classmethod
    def from_rotvec(cls, rotvec, p=(0.0, 0.0, 0.0)) -> RigidTransform:
        rotvec = np.asarray(rotvec, dtype=float)
        angle = float(np.linalg.norm(rotvec))
        if angle == 0.0:
            return cls(np.eye(3), p)
        return cls(rodrigues_exp(rotvec / angle, angle), p)

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.p
        return T

    def inverse(self) -> RigidTransform:
        Rt = self.R.T
        return RigidTransform(Rt, -Rt @ self.p)

    def apply(self, x) -> np.ndarray:
        """Transform points stored along the last axis."""
        x = np.asarray(x, dtype=float)
        return x @ self.R.T + self.p

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return RigidTransform(self.R @ other.R, self.R @ other.p + self.p)

    def __repr__(self) -> str:
        return f"RigidTransform(R={self.R.tolist()}, p={self.p.tolist()})"


@dataclass(frozen=True)
class EulerAngles:
    roll: float
    pitch: float
    yaw: float
    degenerate: bool = False

    def as_array(self) -> np.ndarray:
        return np.array([self.roll, self.pitch, self.yaw])


def _check_unit(axis, what: str = "axis") -> np.ndarray:
    axis = np.asarray(axis, dtype=float).reshape(3)
    n = float(np.linalg.norm(axis))
    if not np.isfinite(n) or abs(n - 1.0) > UNIT_TOL:
        raise PreconditionError(f"{what} must be unit-norm, got norm {n:.6g}")
    return axis


def rodrigues_exp(axis, angle: float) -> np.ndarray:
    """Rotation by ``angle`` about the unit ``axis``."""
    w = _check_unit(axis)
    K = skew(w)
    s, c = math.sin(angle), math.cos(angle)
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def check_screw(screw) -> np.ndarray:
    """Validate a zero-pitch revolute or a prismatic screw axis."""
    S = np.asarray(screw, dtype=float).reshape(6)
    if not np.all(np.isfinite(S)):
        raise PreconditionError("screw axis has non-finite entries")
    wn = float(np.linalg.norm(S[:3]))
    if wn == 0.0:
        vn = float(np.linalg.norm(S[3:]))
        if abs(vn - 1.0) > UNIT_TOL:
            raise PreconditionError(f"prismatic screw needs unit v, got norm {vn:.6g}")
    elif abs(wn - 1.0) > UNIT_TOL:
        raise PreconditionError(f"screw angular part must be unit-norm, got norm {wn:.6g}")
    return S


def twist_exp(screw, angle: float) -> RigidTransform:
    """Rigid motion from travelling ``angle`` along a screw axis."""
    S = check_screw(screw)
    w, v = S[:3], S[3:]
    if not np.any(w):
        return RigidTransform(np.eye(3), v * angle)
    K = skew(w)
    K2 = K @ K
    s, c = math.sin(angle), math.cos(angle)
    R = np.eye(3) + s * K + (1.0 - c) * K2
    G = np.eye(3) * angle + (1.0 - c) * K + (angle - s) * K2
    return RigidTransform(R, G @ v)


def screw_from_axis_point(omega, point) -> np.ndarray:
    """Zero-pitch screw through ``point`` along ``omega``: v = -omega x q."""
    w = np.asarray(omega, dtype=float)
    return np.concatenate([w, -np.cross(w, np.asarray(point, dtype=float))])


def adjoint(T: RigidTransform) -> np.ndarray:
    """6x6 adjoint map for screw coordinates ordered (omega, v)."""
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = T.R
    Ad[3:, 3:] = T.R
    Ad[3:, :3] = skew(T.p) @ T.R
    return Ad


def rotation_log(R) -> tuple[np.ndarray, float]:
    """Axis-angle of a rotation; angle in [0, pi].

    At zero angle the axis is the fixed choice (0, 0, 1).
    """
    R = np.asarray(R, dtype=float)
    cos_t = (np.trace(R) - 1.0) / 2.0
    cos_t = min(1.0, max(-1.0, cos_t))
    # atan2 keeps full precision near 0 and pi, where acos does not.
    angle = math.atan2(0.5 * float(np.linalg.norm(unskew(R - R.T))), cos_t)
    if angle < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    if math.pi - angle > 1e-4:
        w = unskew(R - R.T) / (2.0 * math.sin(angle))
        return w / np.linalg.norm(w), angle
    # Near pi the antisymmetric part vanishes; use R + I = 2 w w^T (1 - cos) + ...
    # built from the column with the largest diagonal entry.
    B = (R + R.T) / 2.0 - cos_t * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    w = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
    w = w / np.linalg.norm(w)
    # Sign is fixed by the (small) antisymmetric part.
    if np.dot(unskew(R - R.T), w) < 0.0:
        w = -w
    return w, angle


def rotvec_from_rotation(R) -> np.ndarray:
    w, angle = rotation_log(R)
    return w * angle


def euler_from_rotation(R) -> EulerAngles:
    """Euler angles from a rotation whose columns are the frame axes (i, j, k).

    pitch = arctan(j_z), roll = arcsin(-i_z), yaw = atan2(i_y, i_x).
    When |i_z| reaches 1 the yaw is undefined: yaw is set to 0, the
    in-plane rotation is reported as pitch and ``degenerate`` is set.
    """
    R = np.asarray(R, dtype=float)
    i, j = R[:, 0], R[:, 1]
    iz = min(1.0, max(-1.0, float(i[2])))
    roll = math.asin(-iz)
    if 1.0 - abs(iz) <= GIMBAL_TOL:
        s = math.sin(roll)
        pitch = math.atan2(j[0] / s, j[1])
        return EulerAngles(float(wrap_angle(roll)), float(wrap_angle(pitch)), 0.0, True)
    pitch = math.atan(j[2])
    yaw = math.atan2(i[1], i[0])
    return EulerAngles(float(wrap_angle(roll)), float(wrap_angle(pitch)), float(wrap_angle(yaw)))


def quaternion_from_rotation(R) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        k = int(np.argmax(np.diag(R)))
        a, b, c = k, (k + 1) % 3, (k + 2) % 3
        s = 2.0 * math.sqrt(max(1.0 + R[a, a] - R[b, b] - R[c, c], 0.0))
        q = np.empty(4)
        q[0] = (R[c, b] - R[b, c]) / s
        q[1 + a] = 0.25 * s
        q[1 + b] = (R[b, a] + R[a, b]) / s
        q[1 + c] = (R[c, a] + R[a, c]) / s
    q /= np.linalg.norm(q)
    return -q if q[0] < 0.0 else q


def rotation_from_quaternion(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def slerp(q0, q1, t: float) -> np.ndarray:
    """Spherical interpolation between unit quaternions along the short arc."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1, d = -q1, -d
    if d > 1.0 - 1e-12:
        q = q0 + t * (q1 - q0)
        return q / np.linalg.norm(q)
    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    q = (math.sin((1.0 - t) * theta) * q0 + math.sin(t * theta) * q1) / s
    return q / np.linalg.norm(q)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    return (
        R.shape == (3, 3)
        and bool(np.all(np.abs(R.T @ R - np.eye(3)) <= tol))
        and abs(float(np.linalg.det(R)) - 1.0) <= tol
    )

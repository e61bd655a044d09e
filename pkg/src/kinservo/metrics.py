"""Trajectory-quality metrics: smoothness, path length, RMSE, per-axis maxima,
and the per-joint velocity-continuity / acceleration / jerk / snap ladder.

Sums run sequentially (``np.cumsum``) rather than pairwise so results are
reproducible against a plain Python loop, bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .liegroup import wrap_angle

ZERO_JERK = math.inf  # smoothness of a trace whose third derivative vanishes


class MetricsError(ValueError):
    pass


class ZeroLength(MetricsError):
    pass


def _seq_sum(x: np.ndarray) -> float:
    return float(np.cumsum(x)[-1]) if len(x) else 0.0


def _pair(actual, desired, width: int) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(actual, dtype=float).reshape(-1, width)
    d = np.asarray(desired, dtype=float).reshape(-1, width)
    if len(a) != len(d):
        raise MetricsError(f"length mismatch: {len(a)} vs {len(d)}")
    if len(a) == 0:
        raise MetricsError("empty sequences")
    return a, d


def trajectory_length(points) -> float:
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(p) == 0:
        raise MetricsError("need at least one point")
    dp = p[1:] - p[:-1]
    seg = np.sqrt(dp[:, 0] * dp[:, 0] + dp[:, 1] * dp[:, 1] + dp[:, 2] * dp[:, 2])
    return _seq_sum(seg)


def _third_derivative(x: np.ndarray, dt: float) -> np.ndarray:
    for _ in range(3):
        x = np.gradient(x, dt, axis=0, edge_order=2)
    return x


def smoothness(points, dt: float) -> float:
    """Reciprocal smoothness function of a uniformly sampled trace.

    ``points`` is (N, k) for k spatial channels (3 for Cartesian, 1 for a
    single joint). Returns ``ZERO_JERK`` when the jerk integral is below 1e-18.
    """
    p = np.asarray(points, dtype=float)
    if p.ndim == 1:
        p = p[:, None]
    if len(p) < 5:
        raise MetricsError("smoothness needs at least 5 samples")
    if not dt > 0.0:
        raise MetricsError("dt must be > 0")
    dp = np.diff(p, axis=0)
    length = _seq_sum(np.sqrt(np.sum(dp * dp, axis=1)))
    if length == 0.0:
        raise ZeroLength("trace does not move")
    j = _third_derivative(p, dt)
    integrand = 0.5 * np.sum(j * j, axis=1)
    integral = float(np.trapezoid(integrand, dx=dt))
    if integral < 1e-18:
        return ZERO_JERK
    span = dt * (len(p) - 1)
    return 1.0 / math.sqrt(integral * span ** 5 / (length * length))


def rmse_position(actual, desired) -> float:
    a, d = _pair(actual, desired, 3)
    e = a - d
    sq = e[:, 0] * e[:, 0] + e[:, 1] * e[:, 1] + e[:, 2] * e[:, 2]
    return math.sqrt((1.0 / len(a)) * _seq_sum(sq))


def rmse_orientation(actual, desired) -> tuple[np.ndarray, float]:
    """Per-angle RMSE of wrapped differences (roll, pitch, yaw) and their combination."""
    a, d = _pair(actual, desired, 3)
    e = wrap_angle(a - d)
    n = len(a)
    per = np.array([math.sqrt((1.0 / n) * _seq_sum(e[:, k] * e[:, k])) for k in range(3)])
    combined = math.sqrt((1.0 / 3.0) * (per[0] ** 2 + per[1] ** 2 + per[2] ** 2))
    return per, combined


def max_axis_errors(actual, desired) -> np.ndarray:
    """Max |error| per axis for (x, y, z, roll, pitch, yaw) traces: mm then deg."""
    a, d = _pair(actual, desired, 6)
    e = np.abs(np.concatenate([a[:, :3] - d[:, :3], wrap_angle(a[:, 3:] - d[:, 3:])], axis=1))
    m = e.max(axis=0)
    return np.concatenate([m[:3] * 1000.0, np.degrees(m[3:])])


@dataclass
class JointProfiles:
    vc: np.ndarray  # deg/s
    ap: np.ndarray  # deg/s^2
    jerk: np.ndarray  # deg/s^3
    snap: np.ndarray  # deg/s^4
    short_trace: bool = False


def derivative_profiles(q, dt: float) -> JointProfiles:
    """Maxima of the finite-difference ladder per joint, in degrees.

    v = dtheta/dt, VC = max |v(k+1) - v(k)|, a = dv/dt, AP = max |a|,
    j = da/dt, jerk = max |j|, s = dj/dt, snap = max |s|. Orders that need
    more ticks than available report 0 and set ``short_trace``.
    """
    th = np.degrees(np.asarray(q, dtype=float))
    if th.ndim == 1:
        th = th[:, None]
    if len(th) < 2:
        raise MetricsError("need at least 2 ticks")
    if not dt > 0.0:
        raise MetricsError("dt must be > 0")
    n = th.shape[1]
    zero = np.zeros(n)

    def peak(x):
        return np.max(np.abs(x), axis=0) if len(x) else zero.copy()

    v = (th[1:] - th[:-1]) / dt
    vc = peak(v[1:] - v[:-1])
    a = (v[1:] - v[:-1]) / dt
    ap = peak(a)
    j = (a[1:] - a[:-1]) / dt
    jerk = peak(j)
    s = (j[1:] - j[:-1]) / dt
    snap = peak(s)
    return JointProfiles(vc, ap, jerk, snap, short_trace=len(th) < 5)


def joint_smoothness(q, dt: float) -> np.ndarray:
    """Smoothness per joint, each joint treated as a one-channel trace (deg)."""
    th = np.degrees(np.asarray(q, dtype=float))
    out = []
    for k in range(th.shape[1]):
        try:
            out.append(smoothness(th[:, k], dt))
        except ZeroLength:
            out.append(ZERO_JERK)
    return np.array(out)


@dataclass
class MetricsReport:
    s_func: float
    length: float
    rmse_pos: float
    rmse_roll: float
    rmse_pitch: float
    rmse_yaw: float
    rmse_orient: float
    max_errors: list  # x, y, z mm; roll, pitch, yaw deg
    vc: list
    ap: list
    jerk: list
    snap: list
    joint_smoothness: list
    short_trace: bool = False
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(actual_pose, desired_pose, q, dt: float) -> MetricsReport:
    """Full report for (N, 6) pose traces (xyz m, rpy rad) and (N, dof) joints."""
    a, d = _pair(actual_pose, desired_pose, 6)
    notes = []
    try:
        s = smoothness(a[:, :3], dt)
    except ZeroLength:
        s, notes = ZERO_JERK, ["end effector did not move; smoothness reported as zero-jerk"]
    except MetricsError as exc:
        s, notes = math.nan, [f"smoothness unavailable: {exc}"]
    per, comb = rmse_orientation(a[:, 3:], d[:, 3:])
    prof = derivative_profiles(q, dt)
    js = joint_smoothness(q, dt) if len(q) >= 5 else np.full(np.shape(q)[1], math.nan)
    return MetricsReport(
        s_func=s, length=trajectory_length(a[:, :3]), rmse_pos=rmse_position(a[:, :3], d[:, :3]),
        rmse_roll=float(per[0]), rmse_pitch=float(per[1]), rmse_yaw=float(per[2]),
        rmse_orient=comb, max_errors=max_axis_errors(a, d).tolist(),
        vc=prof.vc.tolist(), ap=prof.ap.tolist(), jerk=prof.jerk.tolist(), snap=prof.snap.tolist(),
        joint_smoothness=js.tolist(), short_trace=prof.short_trace, notes=notes,
    )


def per_axis_rmse(actual, desired) -> np.ndarray:
    """RMSE per axis of (N, 6) pose traces: x, y, z in mm; roll, pitch, yaw in deg."""
    a, d = _pair(actual, desired, 6)
    e = np.concatenate([a[:, :3] - d[:, :3], wrap_angle(a[:, 3:] - d[:, 3:])], axis=1)
    n = len(a)
    r = np.array([math.sqrt((1.0 / n) * _seq_sum(e[:, k] * e[:, k])) for k in range(6)])
    return np.concatenate([r[:3] * 1000.0, np.degrees(r[3:])])

"""Product-of-exponentials forward kinematics and the space Jacobian.

Jacobian rows are (linear x, y, z; angular x, y, z). Screw coordinates
everywhere else are (angular; linear); ``to_linear_first`` is the one place
the order is swapped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .liegroup import RigidTransform, skew
from .robot_model import RobotModel


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class _Chain:
    omega: np.ndarray  # (n, 3)
    v: np.ndarray      # (n, 3)
    K: np.ndarray      # (n, 3, 3) skew(omega)
    K2: np.ndarray     # (n, 3, 3)
    Kv: np.ndarray     # (n, 3)
    K2v: np.ndarray    # (n, 3)
    prismatic: np.ndarray  # (n,) bool


def _chain(model: RobotModel) -> _Chain:
    cached = model.__dict__.get("_chain_cache")
    if cached is not None:
        return cached
    S = model.screws
    omega, v = S[:, :3].copy(), S[:, 3:].copy()
    K = np.array([skew(w) for w in omega]).reshape(-1, 3, 3)
    K2 = K @ K
    chain = _Chain(
        omega=omega, v=v, K=K, K2=K2,
        Kv=np.einsum("nij,nj->ni", K, v), K2v=np.einsum("nij,nj->ni", K2, v),
        prismatic=~np.any(omega != 0.0, axis=1),
    )
    object.__setattr__(model, "_chain_cache", chain)
    return chain


def _check_q(model: RobotModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.dof,):
        raise DimensionError(f"expected {model.dof} joint values, got shape {q.shape}")
    return q


def to_linear_first(screw_cols: np.ndarray) -> np.ndarray:
    """Reorder (omega; v) rows to (v; omega)."""
    return np.concatenate([screw_cols[3:], screw_cols[:3]], axis=0)


def _joint_tuples(model: RobotModel) -> list:
    cached = model.__dict__.get("_tuple_cache")
    if cached is None:
        cached = [tuple(float(x) for x in s) + (not np.any(s[:3]),) for s in model.screws]
        object.__setattr__(model, "_tuple_cache", cached)
    return cached


def _fk_jac(model: RobotModel, q: np.ndarray, want_jac: bool):
    # Scalar arithmetic on purpose: for 3x3 blocks this beats numpy calls ~6x,
    # which dominates solver time.
    r00, r01, r02, r10, r11, r12, r20, r21, r22 = 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0
    px = py = pz = 0.0
    cols = []
    for (wx, wy, wz, vx, vy, vz, prismatic), th in zip(_joint_tuples(model), q.tolist()):
        if want_jac:
            # Column i is Ad(e^[S1]th1 ... e^[S_{i-1}]th_{i-1}) S_i, stored (v; omega).
            ax = r00 * wx + r01 * wy + r02 * wz
            ay = r10 * wx + r11 * wy + r12 * wz
            az = r20 * wx + r21 * wy + r22 * wz
            cols.append((
                r00 * vx + r01 * vy + r02 * vz + (py * az - pz * ay),
                r10 * vx + r11 * vy + r12 * vz + (pz * ax - px * az),
                r20 * vx + r21 * vy + r22 * vz + (px * ay - py * ax),
                ax, ay, az,
            ))
        if prismatic:
            tx, ty, tz = vx * th, vy * th, vz * th
            px += r00 * tx + r01 * ty + r02 * tz
            py += r10 * tx + r11 * ty + r12 * tz
            pz += r20 * tx + r21 * ty + r22 * tz
            continue
        s, c = math.sin(th), math.cos(th)
        oc = 1.0 - c
        a00 = c + wx * wx * oc
        a01 = wx * wy * oc - wz * s
        a02 = wx * wz * oc + wy * s
        a10 = wy * wx * oc + wz * s
        a11 = c + wy * wy * oc
        a12 = wy * wz * oc - wx * s
        a20 = wz * wx * oc - wy * s
        a21 = wz * wy * oc + wx * s
        a22 = c + wz * wz * oc
        # (I th + (1-c)[w] + (th-s)[w]^2) v == (I - R)(w x v) + w (w.v) th for unit w
        cx, cy, cz = wy * vz - wz * vy, wz * vx - wx * vz, wx * vy - wy * vx
        wv = (wx * vx + wy * vy + wz * vz) * th
        tx = cx - (a00 * cx + a01 * cy + a02 * cz) + wx * wv
        ty = cy - (a10 * cx + a11 * cy + a12 * cz) + wy * wv
        tz = cz - (a20 * cx + a21 * cy + a22 * cz) + wz * wv
        px += r00 * tx + r01 * ty + r02 * tz
        py += r10 * tx + r11 * ty + r12 * tz
        pz += r20 * tx + r21 * ty + r22 * tz
        r00, r01, r02, r10, r11, r12, r20, r21, r22 = (
            r00 * a00 + r01 * a10 + r02 * a20, r00 * a01 + r01 * a11 + r02 * a21,
            r00 * a02 + r01 * a12 + r02 * a22,
            r10 * a00 + r11 * a10 + r12 * a20, r10 * a01 + r11 * a11 + r12 * a21,
            r10 * a02 + r11 * a12 + r12 * a22,
            r20 * a00 + r21 * a10 + r22 * a20, r20 * a01 + r21 * a11 + r22 * a21,
            r20 * a02 + r21 * a12 + r22 * a22,
        )
    R = np.array([[r00, r01, r02], [r10, r11, r12], [r20, r21, r22]])
    N = model.home
    T = RigidTransform(R @ N.R, R @ N.p + np.array([px, py, pz]))
    J = np.array(cols).T if want_jac else None
    return T, J


def forward_kinematics(model: RobotModel, q) -> RigidTransform:
    """End-effector pose e^[S1]q1 ... e^[Sn]qn N in the base frame."""
    T, _ = _fk_jac(model, _check_q(model, q), False)
    return T


def space_jacobian(model: RobotModel, q) -> np.ndarray:
    """6 x n space Jacobian, rows (linear; angular)."""
    _, J = _fk_jac(model, _check_q(model, q), True)
    return J


def fk_and_jacobian(model: RobotModel, q) -> tuple[RigidTransform, np.ndarray]:
    return _fk_jac(model, _check_q(model, q), True)


def ee_twist(J, qdot) -> tuple[np.ndarray, np.ndarray]:
    """Spatial twist J @ qdot as (linear, angular)."""
    J = np.asarray(J, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    if J.ndim != 2 or J.shape[0] != 6 or qdot.shape != (J.shape[1],):
        raise DimensionError(f"qdot of shape {qdot.shape} does not match Jacobian {J.shape}")
    V = J @ qdot
    return V[:3], V[3:]


def fk_positions(model: RobotModel, Q) -> np.ndarray:
    """End-effector positions for a batch of configurations, shape (m, 3)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != model.dof:
        raise DimensionError(f"expected {model.dof} columns, got {Q.shape[1]}")
    ch = _chain(model)
    m = Q.shape[0]
    R = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    p = np.zeros((m, 3))
    for i in range(model.dof):
        th = Q[:, i]
        if ch.prismatic[i]:
            p += np.einsum("mij,j->mi", R, ch.v[i]) * th[:, None]
            continue
        s, c = np.sin(th), np.cos(th)
        Ri = (np.eye(3)[None] + s[:, None, None] * ch.K[i]
              + (1.0 - c)[:, None, None] * ch.K2[i])
        pi = (th[:, None] * ch.v[i] + (1.0 - c)[:, None] * ch.Kv[i]
              + (th - s)[:, None] * ch.K2v[i])
        p = np.einsum("mij,mj->mi", R, pi) + p
        R = R @ Ri
    return np.einsum("mij,j->mi", R, model.home.p) + p


@dataclass(frozen=True)
class WorkspaceReport:
    samples: int
    max_reach: float
    volume: float
    voxel_edge: float
    seed: int
    occupied_voxels: int


WORKSPACE_CHUNK = 8192


def workspace_points(model: RobotModel, samples: int, seed: int) -> np.ndarray:
    """Uniform joint-space samples mapped to end-effector positions.

    Chunk k draws from its own stream seeded with ``seed + k``, so any
    prefix of a longer run equals the shorter run.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    lo, hi = model.lower, model.upper
    out = []
    remaining = samples
    k = 0
    while remaining > 0:
        rng = np.random.default_rng(seed + k)
        u = rng.random((WORKSPACE_CHUNK, model.dof))
        take = min(remaining, WORKSPACE_CHUNK)
        out.append(fk_positions(model, lo + u[:take] * (hi - lo)))
        remaining -= take
        k += 1
    return np.concatenate(out, axis=0)


def sample_workspace(model: RobotModel, samples: int, voxel_edge: float, seed: int = 0,
                     points: np.ndarray | None = None) -> WorkspaceReport:
    if voxel_edge <= 0.0:
        raise ValueError("voxel_edge must be > 0")
    if points is None:
        points = workspace_points(model, samples, seed)
    reach = float(np.max(np.linalg.norm(points, axis=1)))
    cells = np.unique(np.floor(points / voxel_edge).astype(np.int64), axis=0)
    return WorkspaceReport(
        samples=int(samples), max_reach=reach,
        volume=float(len(cells) * voxel_edge ** 3),
        voxel_edge=float(voxel_edge), seed=int(seed), occupied_voxels=int(len(cells)),
    )


def write_point_cloud_csv(path, points) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_m", "y_m", "z_m"])
        for x, y, z in points:
            w.writerow([f"{x:.6f}", f"{y:.6f}", f"{z:.6f}"])

"""Shared fixtures and independent oracles.

The oracles deliberately avoid the library's closed forms: matrix exponentials
are summed as truncated power series, derivatives are central differences and
metric sums are plain Python loops.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from kinservo.robot_model import default_iiwa14

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model():
    return default_iiwa14()


# ---------------------------------------------------------------- oracles

def series_expm(A: np.ndarray, terms: int = 40) -> np.ndarray:
    """exp(A) as a truncated power series, with scaling and squaring."""
    A = np.asarray(A, dtype=float)
    norm = float(np.max(np.sum(np.abs(A), axis=1)))
    s = max(0, int(math.ceil(math.log2(norm))) + 1) if norm > 0.5 else 0
    X = A / (2 ** s)
    out = np.eye(len(A))
    term = np.eye(len(A))
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    for _ in range(s):
        out = out @ out
    return out


def se3_hat(screw) -> np.ndarray:
    w, v = np.asarray(screw[:3], float), np.asarray(screw[3:], float)
    M = np.zeros((4, 4))
    M[:3, :3] = [[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]]
    M[:3, 3] = v
    return M


def fk_oracle(model, q) -> np.ndarray:
    """4x4 product of series exponentials times the home pose."""
    T = np.eye(4)
    for S, th in zip(model.screws, q):
        T = T @ series_expm(se3_hat(S) * th)
    return T @ model.home.as_matrix()


def fd_jacobian(model, q, h: float = 1e-6) -> np.ndarray:
    """Space Jacobian (linear; angular) from central differences of 4x4 FK."""
    from kinservo.kinematics import forward_kinematics

    q = np.asarray(q, dtype=float)
    T0inv = np.linalg.inv(forward_kinematics(model, q).as_matrix())
    cols = []
    for i in range(len(q)):
        dq = np.zeros(len(q))
        dq[i] = h
        Tp = forward_kinematics(model, q + dq).as_matrix()
        Tm = forward_kinematics(model, q - dq).as_matrix()
        M = (Tp - Tm) / (2 * h) @ T0inv
        w = np.array([M[2, 1], M[0, 2], M[1, 0]])
        cols.append(np.concatenate([M[:3, 3], w]))
    return np.column_stack(cols)


def random_config(model, rng, margin: float = 0.0) -> np.ndarray:
    lo, hi = model.lower + margin, model.upper - margin
    return lo + rng.random(model.dof) * (hi - lo)


# ---------------------------------------------------------------- scenes

FRONTO = np.diag([1.0, -1.0, -1.0])  # object facing a camera at the base origin


def scenario(name: str):
    from kinservo.simulation import bundled_scenario_path, load_scenario

    return load_scenario(bundled_scenario_path(name))


def fronto_scenario(depth_m: float = 0.6, **changes):
    """Camera at the base origin, noiseless object plane facing it at ``depth_m``."""
    from dataclasses import replace

    from kinservo.liegroup import RigidTransform
    from kinservo.simulation import NoiseModel, ObjectMotion

    sc = scenario("static-object")
    motion = ObjectMotion((0.0,), (RigidTransform(FRONTO, [0.0, 0.0, depth_m]),))
    kw = dict(camera_pose=RigidTransform.identity(), motion=motion, noise=NoiseModel())
    kw.update(changes)
    return replace(sc, **kw)


# ---------------------------------------------------------------- homographies

def homography(deg=10.0, scale=1.2, t=(5.0, -3.0)):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[scale * c, -scale * s, t[0]], [scale * s, scale * c, t[1]], [0, 0, 1.0]])


def apply_h(H, pts):
    h = np.column_stack([pts, np.ones(len(pts))]) @ H.T
    return h[:, :2] / h[:, 2:]


def labelled_matches(seed, n_in=70, n_out=30, threshold=2.0):
    """Exact inliers plus random pairs that disagree with the true map (src, dst, label)."""
    from kinservo.pose_estimation import symmetric_error

    rng = np.random.default_rng(seed)
    H = homography(rng.uniform(-30, 30), rng.uniform(0.7, 1.3), rng.uniform(-50, 50, 2))
    H[2, :2] = rng.uniform(-2e-4, 2e-4, 2)
    src = rng.uniform(0, 400, (n_in, 2))
    dst = apply_h(H, src)
    out_src, out_dst = [], []
    while len(out_src) < n_out:
        a, b = rng.uniform(0, 400, 2), rng.uniform(-100, 500, 2)
        # Random pairs that happen to agree with the true model are not outliers.
        if symmetric_error(H, a[None], b[None])[0] >= 2 * threshold:
            out_src.append(a)
            out_dst.append(b)
    S = np.vstack([src, out_src])
    Dst = np.vstack([dst, out_dst])
    label = np.r_[np.ones(n_in, bool), np.zeros(n_out, bool)]
    perm = rng.permutation(len(S))
    return S[perm], Dst[perm], label[perm]

"""Damped least-squares inverse kinematics."""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .kinematics import DimensionError, fk_and_jacobian
from .liegroup import RigidTransform, rotvec_from_rotation
from .robot_model import RobotModel

ALPHA_MIN = 1e-4
DEFAULT_TOL = (0.01,) * 6


class IkStatus(str, enum.Enum):
    CONVERGED = "Converged"
    LOCAL_MINIMUM = "LocalMinimum"
    TIMED_OUT = "TimedOut"
    MAX_ITERATIONS = "MaxIterations"


class IkError(ValueError):
    pass


@dataclass(frozen=True)
class DlsParams:
    """Solver settings.

    ``damping`` is a fixed alpha or ``"auto"`` for the error-proportional
    schedule. ``weights`` (6x6, task space) switches the step to the weighted
    form (J^T W J + alpha I)^-1 J^T W. ``max_ms=None`` disables the wall-time
    stop.
    """

    damping: Union[float, str] = "auto"
    weights: Optional[np.ndarray] = None
    step_threshold: float = math.radians(5.0)
    tol: tuple = DEFAULT_TOL
    max_iters: int = 500
    max_ms: Optional[float] = 100.0
    local_min_window: int = 20
    local_min_rel: float = 1e-10
    restart_on_local_min: bool = False
    restart_perturbation: float = math.radians(5.0)
    restart_seed: int = 0
    alpha_min: float = ALPHA_MIN

    def __post_init__(self):
        tol = tuple(float(t) for t in self.tol)
        if len(tol) != 6 or any(t <= 0.0 for t in tol):
            raise ValueError("tol must be six positive numbers")
        object.__setattr__(self, "tol", tol)
        if not self.step_threshold > 0.0:
            raise ValueError("step_threshold must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.damping == "auto" or float(self.damping) >= 0.0):
            raise ValueError("damping must be 'auto' or >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> DlsParams:
        """Build from the scenario/CLI keys (degrees where the key says so)."""
        kw = {}
        if "damping_alpha" in d:
            kw["damping"] = d["damping_alpha"] if d["damping_alpha"] == "auto" else float(d["damping_alpha"])
        if "step_threshold_deg" in d:
            kw["step_threshold"] = math.radians(float(d["step_threshold_deg"]))
        if "tol" in d:
            kw["tol"] = tuple(d["tol"])
        if "max_iters" in d:
            kw["max_iters"] = int(d["max_iters"])
        if "max_ms" in d:
            kw["max_ms"] = None if d["max_ms"] is None else float(d["max_ms"])
        if "restart_on_local_min" in d:
            kw["restart_on_local_min"] = bool(d["restart_on_local_min"])
        unknown = set(d) - {"damping_alpha", "step_threshold_deg", "tol", "max_iters",
                            "max_ms", "restart_on_local_min"}
        if unknown:
            raise ValueError(f"unknown solver key(s): {', '.join(sorted(unknown))}")
        return cls(**kw)


@dataclass
class IkOutcome:
    status: IkStatus
    q: np.ndarray
    error: np.ndarray
    iterations: int
    history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status is IkStatus.CONVERGED


def pose_error(target: RigidTransform, current: RigidTransform) -> np.ndarray:
    """(dx, dy, dz, da, db, dg): translation difference and the rotation
    vector of R_target R_current^T, both in the base frame."""
    rot = rotvec_from_rotation(target.R @ current.R.T)
    return np.concatenate([target.p - current.p, rot])


def error_twist(e: np.ndarray, p_current: np.ndarray) -> np.ndarray:
    """Space twist (linear; angular) whose motion yields point velocity e[:3]."""
    wx, wy, wz = e[3], e[4], e[5]
    px, py, pz = p_current
    return np.array([e[0] - (wy * pz - wz * py), e[1] - (wz * px - wx * pz),
                     e[2] - (wx * py - wy * px), wx, wy, wz])


def dls_step(J, e, alpha: float, weights=None) -> np.ndarray:
    """Joint increment J^T (J J^T + alpha^2 I)^-1 e.

    With task weights W the weighted form (J^T W J + alpha I)^-1 J^T W e is
    used instead.
    """
    J = np.asarray(J, dtype=float)
    e = np.asarray(e, dtype=float)
    if J.ndim != 2 or J.shape[0] != 6 or e.shape != (6,):
        raise DimensionError(f"bad shapes J={J.shape} e={e.shape}")
    if not (np.all(np.isfinite(J)) and np.all(np.isfinite(e)) and math.isfinite(alpha)):
        raise ValueError("non-finite input to dls_step")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    if weights is None:
        A = J @ J.T + (alpha * alpha) * np.eye(6)
        return J.T @ np.linalg.solve(A, e)
    W = np.asarray(weights, dtype=float)
    JtW = J.T @ W
    A = JtW @ J + alpha * np.eye(J.shape[1])
    return np.linalg.solve(A, JtW @ e)


def clamp_step(delta, threshold: float, beta: float = 1.0) -> np.ndarray:
    """Scale ``delta`` so no component exceeds ``threshold`` (then by ``beta``)."""
    if not threshold > 0.0:
        raise ValueError("threshold must be > 0")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    delta = np.asarray(delta, dtype=float)
    biggest = float(np.max(np.abs(delta))) if delta.size else 0.0
    beta_h = threshold / max(threshold, biggest)
    return beta * beta_h * delta


def damping_schedule(model: RobotModel, e, alpha_min: float = ALPHA_MIN) -> float:
    """alpha = |e_translation| * segment_sum / 100, floored at ``alpha_min``."""
    e = np.asarray(e, dtype=float)
    c = 0.01 * model.segment_sum
    return max(float(np.linalg.norm(e[:3])) * c, alpha_min)


def within_tol(e, tol) -> bool:
    return bool(np.all(np.abs(e) <= np.asarray(tol)))


def solve_ik(model: RobotModel, target: RigidTransform, seed_config,
             params: DlsParams = DlsParams()) -> IkOutcome:
    q = np.asarray(seed_config, dtype=float).copy()
    if q.shape != (model.dof,):
        raise DimensionError(f"seed has shape {q.shape}, model has {model.dof} joints")
    lo, hi = model.lower, model.upper
    tol = np.asarray(params.tol)
    window = params.local_min_window
    rng = np.random.default_rng(params.restart_seed) if params.restart_on_local_min else None
    start = time.perf_counter()
    history: list[float] = []
    steps: list[float] = []
    status = IkStatus.MAX_ITERATIONS
    iters = 0
    last_restart = 0

    while True:
        T, J = fk_and_jacobian(model, q)
        e = pose_error(target, T)
        history.append(float(np.linalg.norm(e)))
        if np.all(np.abs(e) <= tol):
            status = IkStatus.CONVERGED
            break
        if iters >= params.max_iters:
            status = IkStatus.MAX_ITERATIONS
            break
        if params.max_ms is not None and (time.perf_counter() - start) * 1000.0 > params.max_ms:
            status = IkStatus.TIMED_OUT
            break
        if len(history) - last_restart > window:
            old = history[-window - 1]
            if old - history[-1] < params.local_min_rel * max(old, 1e-300):
                if rng is None:
                    status = IkStatus.LOCAL_MINIMUM
                    break
                q = np.clip(q + rng.uniform(-1, 1, q.shape) * params.restart_perturbation, lo, hi)
                last_restart = len(history)
                continue
        if params.damping == "auto":
            alpha = damping_schedule(model, e, params.alpha_min)
        else:
            alpha = float(params.damping)
        V = error_twist(e, T.p)
        dq = dls_step(J, V, alpha, params.weights)
        # Joints already at a limit and pushed further out are frozen for this step.
        blocked = ((q <= lo) & (dq < 0.0)) | ((q >= hi) & (dq > 0.0))
        if np.any(blocked):
            dq = dls_step(np.where(blocked, 0.0, J), V, alpha, params.weights)
            dq[blocked] = 0.0
        dq = clamp_step(dq, params.step_threshold)
        steps.append(float(np.max(np.abs(dq))))
        q = np.clip(q + dq, lo, hi)
        iters += 1

    return IkOutcome(status, q, e, iters, history, steps)


def with_params(params: DlsParams, **changes) -> DlsParams:
    return replace(params, **changes)

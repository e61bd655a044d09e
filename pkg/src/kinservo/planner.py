"""Joint-space RRT* and uniform-speed time parameterization."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .ik_dls import DlsParams, IkStatus, solve_ik
from .liegroup import RigidTransform
from .robot_model import RobotModel


class PlanningError(ValueError):
    pass


class NoPathFound(PlanningError):
    pass


class IkFailed(PlanningError):
    def __init__(self, outcome):
        self.outcome = outcome
        super().__init__(f"IK did not converge ({outcome.status.value}, "
                         f"max |e| = {np.max(np.abs(outcome.error)):.4g})")


def always_free(q_from: np.ndarray, q_to: np.ndarray) -> bool:
    """Collision predicate for obstacle-free environments."""
    return True


@dataclass(frozen=True)
class PlannerParams:
    max_iterations: int = 3000
    goal_bias: float = 0.05
    steer_step: float = 0.2
    rewire_gamma: float = 6.0
    seed: int = 0
    goal_tolerance: float = 1e-9
    weights: Optional[tuple] = None

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must be in [0, 1]")
        if not self.steer_step > 0.0:
            raise ValueError("steer_step must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> PlannerParams:
        allowed = {"max_iterations", "goal_bias", "steer_step", "rewire_gamma", "seed",
                   "goal_tolerance", "weights"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown planner key(s): {', '.join(sorted(unknown))}")
        kw = dict(d)
        if kw.get("weights") is not None:
            kw["weights"] = tuple(float(w) for w in kw["weights"])
        return cls(**kw)


@dataclass
class JointPath:
    waypoints: np.ndarray  # (k, dof)
    cost: float
    iterations: int = 0
    cost_history: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.waypoints)


@dataclass
class JointTrajectory:
    dt: float
    q: np.ndarray  # (ticks, dof)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.q)) * self.dt


def _densify(points: np.ndarray, step: float) -> np.ndarray:
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        d = float(np.linalg.norm(b - a))
        n = max(1, int(math.ceil(d / step - 1e-12)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def _first_axis_frame(a: np.ndarray) -> np.ndarray:
    """Orthogonal (Householder) matrix whose first column is the unit vector ``a``."""
    e1 = np.zeros(a.size)
    e1[0] = 1.0
    u = e1 - a
    nu = float(np.linalg.norm(u))
    if nu < 1e-12:
        return np.eye(a.size)
    u /= nu
    return np.eye(a.size) - 2.0 * np.outer(u, u)


class RRTStar:
    """Single-query RRT* over the joint box of a robot model.

    Once a path is known, samples are drawn from the ellipsoid of points
    that could still shorten it (informed sampling); before that they are
    uniform over the joint box. One instance per query thread; ``calls``
    counts ``plan`` invocations.
    """

    def __init__(self, model: RobotModel, params: PlannerParams = PlannerParams(),
                 collision_free: Callable[[np.ndarray, np.ndarray], bool] = always_free):
        self.model = model
        self.params = params
        self.collision_free = collision_free
        self.calls = 0

    def plan(self, start, goal) -> JointPath:
        self.calls += 1
        m, prm = self.model, self.params
        lo, hi = m.lower, m.upper
        start = np.asarray(start, dtype=float)
        goal = np.asarray(goal, dtype=float)
        for name, q in (("start", start), ("goal", goal)):
            if q.shape != (m.dof,):
                raise PlanningError(f"{name} has shape {q.shape}, model has {m.dof} joints")
            if not m.within_limits(q):
                raise PlanningError(f"{name} configuration is outside the joint limits")
        scale = np.ones(m.dof) if prm.weights is None else np.sqrt(np.asarray(prm.weights, float))

        # All tree geometry lives in metric-scaled coordinates y = q * scale.
        s_lo, s_hi = lo * scale, hi * scale
        y_start, y_goal = start * scale, goal * scale
        c_min = float(np.linalg.norm(y_goal - y_start))
        if c_min <= prm.goal_tolerance:
            return JointPath(np.array([start]), 0.0, 0, [0.0])

        rng = np.random.default_rng(prm.seed)
        d = m.dof
        cap = prm.max_iterations + 2
        Y = np.empty((cap, d))
        cost = np.empty(cap)
        parent = np.full(cap, -1, dtype=np.int64)
        children: list[list[int]] = [[]]
        Y[0], cost[0] = y_start, 0.0
        n = 1
        goal_idx = -1
        step = prm.steer_step
        centre = 0.5 * (y_start + y_goal)
        C = _first_axis_frame((y_goal - y_start) / c_min)
        history = []
        free = self.collision_free

        def unscale(y):
            return y / scale

        def sample_informed(c_best: float) -> np.ndarray:
            r1 = c_best / 2.0
            r2 = math.sqrt(max(c_best * c_best - c_min * c_min, 0.0)) / 2.0
            radii = np.array([r1] + [r2] * (d - 1))
            for _ in range(100):
                x = rng.standard_normal(d)
                x *= rng.random() ** (1.0 / d) / np.linalg.norm(x)
                y = C @ (radii * x) + centre
                if np.all(y >= s_lo) and np.all(y <= s_hi):
                    return y
            return s_lo + rng.random(d) * (s_hi - s_lo)

        def attach(k: int, new_parent: int) -> None:
            old = parent[k]
            if old >= 0:
                children[old].remove(k)
            parent[k] = new_parent
            children[new_parent].append(k)

        def propagate(root: int, delta: float) -> None:
            stack = list(children[root])
            while stack:
                k = stack.pop()
                cost[k] -= delta
                stack.extend(children[k])

        iterations = 0
        for _ in range(prm.max_iterations):
            c_best = cost[goal_idx] if goal_idx >= 0 else math.inf
            if c_best <= c_min * (1.0 + 1e-12):
                break  # straight segment reached; no sample can shorten it
            iterations += 1
            if goal_idx < 0 and rng.random() < prm.goal_bias:
                y_rand = y_goal
            elif goal_idx >= 0:
                y_rand = sample_informed(c_best)
            else:
                y_rand = s_lo + rng.random(d) * (s_hi - s_lo)
            diff = Y[:n] - y_rand
            near_i = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
            y_near = Y[near_i]
            delta = y_rand - y_near
            dlen = float(np.linalg.norm(delta))
            if dlen <= 1e-12:
                history.append(c_best)
                continue
            if goal_idx < 0 and float(np.linalg.norm(y_goal - y_near)) <= 2.0 * step:
                y_new = y_goal.copy()
            elif dlen > step:
                y_new = y_near + delta * (step / dlen)
            else:
                y_new = y_rand.copy()
            y_new = np.clip(y_new, s_lo, s_hi)
            is_goal = bool(np.array_equal(y_new, y_goal))
            if (is_goal and goal_idx >= 0) or not free(unscale(y_near), unscale(y_new)):
                history.append(c_best)
                continue

            radius = min(prm.rewire_gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / d), 4.0 * step)
            diff = Y[:n] - y_new
            dn = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            near = np.nonzero(dn <= radius)[0]
            if near_i not in near:
                near = np.append(near, near_i)
            # Cheapest collision-free parent among the neighbours.
            order = near[np.argsort(cost[near] + dn[near], kind="stable")]
            best = -1
            for k in order:
                if free(unscale(Y[k]), unscale(y_new)):
                    best = int(k)
                    break
            if best < 0:
                history.append(c_best)
                continue
            new = n
            Y[new], cost[new] = y_new, cost[best] + dn[best]
            children.append([])
            attach(new, best)
            n += 1
            if is_goal:
                goal_idx = new
            cand = near[(cost[new] + dn[near] < cost[near] - 1e-12) & (near != best) & (near != 0)]
            for k in cand:
                k = int(k)
                c = cost[new] + dn[k]
                if c < cost[k] - 1e-12 and free(unscale(y_new), unscale(Y[k])):
                    delta_c = cost[k] - c
                    cost[k] = c
                    attach(k, new)
                    propagate(k, delta_c)
            history.append(cost[goal_idx] if goal_idx >= 0 else math.inf)

        if goal_idx < 0:
            raise NoPathFound(f"goal not connected after {prm.max_iterations} iterations")
        chain = []
        k = goal_idx
        while k >= 0:
            chain.append(Y[k])
            k = parent[k]
        ys = np.array(chain[::-1])
        path_cost = float(np.sum(np.linalg.norm(np.diff(ys, axis=0), axis=1)))
        pts = unscale(ys)
        pts[0], pts[-1] = start, goal
        # Rewired edges may exceed the steer step; they are straight, so
        # splitting them keeps the cost.
        return JointPath(np.clip(_densify(pts, step), lo, hi), path_cost, iterations, history)


def plan(model: RobotModel, start, goal, params: PlannerParams = PlannerParams()) -> JointPath:
    return RRTStar(model, params).plan(start, goal)


def goal_from_pose(model: RobotModel, target: RigidTransform, seed_config=None,
                   params: DlsParams = DlsParams()):
    """Converged IK solution to use as planner goal; raises IkFailed otherwise."""
    seed_config = model.mid_config if seed_config is None else seed_config
    out = solve_ik(model, target, seed_config, params)
    if out.status is not IkStatus.CONVERGED:
        raise IkFailed(out)
    return out.q


def time_parameterize(path: JointPath, dt: float, max_joint_speed: float) -> JointTrajectory:
    """Constant joint-space speed along the path, capped per joint, sampled every ``dt``."""
    if not dt > 0.0 or not max_joint_speed > 0.0:
        raise ValueError("dt and max_joint_speed must be > 0")
    pts = np.asarray(path.waypoints, dtype=float)
    if len(pts) == 0:
        raise PlanningError("empty path")
    if len(pts) == 1:
        return JointTrajectory(dt, np.array([pts[0], pts[0]]))
    seg = np.diff(pts, axis=0)
    # Arc length in the max-norm: moving at unit rate in it keeps every joint <= speed.
    seg_len = np.max(np.abs(seg), axis=1)
    s_knots = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = s_knots[-1]
    duration = total / max_joint_speed
    ticks = int(math.ceil(duration / dt - 1e-9)) + 1
    ticks = max(ticks, 2)
    t = np.arange(ticks) * dt
    s = np.minimum(t * max_joint_speed, total)
    s[-1] = total
    q = np.empty((ticks, pts.shape[1]))
    for j in range(pts.shape[1]):
        q[:, j] = np.interp(s, s_knots, pts[:, j])
    q[0], q[-1] = pts[0], pts[-1]
    return JointTrajectory(dt, q)


def write_path_csv(path, waypoints) -> None:
    waypoints = np.asarray(waypoints)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tick"] + [f"q{i + 1}" for i in range(waypoints.shape[1])])
        for k, q in enumerate(waypoints):
            w.writerow([k] + [f"{v:.9f}" for v in q])

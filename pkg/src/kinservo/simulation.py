"""Scenario-driven closed-loop simulation: synthetic RGB-D camera, RRT*
approach, then DLS visual servoing at a fixed rate.

Execution is kinematic (commanded joints are reached by the next tick) and
time is simulated, so a (scenario, seed) pair fixes every output.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .ik_dls import DlsParams, pose_error, solve_ik
from .kinematics import forward_kinematics
from .liegroup import (
    RigidTransform,
    euler_from_rotation,
    quaternion_from_rotation,
    rotation_from_quaternion,
    slerp,
)
from .metrics import MetricsReport, evaluate, per_axis_rmse
from .planner import RRTStar, PlannerParams, goal_from_pose, time_parameterize
from .pose_estimation import (
    CameraIntrinsics,
    Frame,
    PoseParams,
    PoseStream,
    intrinsics_from_dict,
)
from .robot_model import RobotModel, resolve_model


class ScenarioError(ValueError):
    pass


class ObjectOutOfView(ValueError):
    pass


# ---------------------------------------------------------------- scenario

@dataclass(frozen=True)
class NoiseModel:
    pixel_sigma: float = 0.0
    depth_sigma: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        if self.pixel_sigma < 0 or self.depth_sigma < 0:
            raise ScenarioError("noise sigmas must be >= 0")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ScenarioError("outlier_fraction must be in [0, 1)")


@dataclass(frozen=True)
class ObjectMotion:
    """Base-frame object pose over time: keyframes (linear + slerp), plus an
    optional sinusoidal translation on top."""

    times: tuple
    poses: tuple  # RigidTransform per keyframe
    amplitude: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frequency: float = 0.0
    phase: float = 0.0

    def pose_at(self, t: float) -> RigidTransform:
        ts = self.times
        if len(ts) == 1 or t <= ts[0]:
            base = self.poses[0]
        elif t >= ts[-1]:
            base = self.poses[-1]
        else:
            k = int(np.searchsorted(ts, t, side="right")) - 1
            a, b = self.poses[k], self.poses[k + 1]
            s = (t - ts[k]) / (ts[k + 1] - ts[k])
            q = slerp(quaternion_from_rotation(a.R), quaternion_from_rotation(b.R), s)
            base = RigidTransform(rotation_from_quaternion(q), a.p + s * (b.p - a.p))
        if self.frequency == 0.0 or not np.any(self.amplitude):
            return base
        offset = self.amplitude * math.sin(2.0 * math.pi * self.frequency * t + self.phase)
        return RigidTransform(base.R, base.p + offset)

    def translated(self, shift) -> ObjectMotion:
        shift = np.asarray(shift, dtype=float)
        return replace(self, poses=tuple(RigidTransform(T.R, T.p + shift) for T in self.poses))


@dataclass(frozen=True)
class Scenario:
    name: str
    model: RobotModel
    intrinsics: CameraIntrinsics
    camera_pose: RigidTransform  # camera frame -> base frame
    template_px: tuple  # (w, h)
    object_m: tuple  # (W, H)
    grid: tuple  # template grid (columns, rows) of matched points
    grid_margin_px: float
    motion: ObjectMotion
    servo_rate: float = 13.0
    standoff: float = 0.15
    standoff_axis: tuple = (0.0, 0.0, 1.0)
    noise: NoiseModel = NoiseModel()
    solver: DlsParams = DlsParams()
    servo_iterations: int = 25
    servo_tol: float = 1e-4
    wall_budget: bool = False
    planner: PlannerParams = PlannerParams()
    max_joint_speed: float = 0.8
    goal_ik: DlsParams = DlsParams(max_ms=None, max_iters=2000, restart_on_local_min=True)
    pose: PoseParams = PoseParams()
    start_config: Optional[np.ndarray] = None
    seed: int = 0
    duration: float = 10.0
    valid_translation_tol: float = 0.01

    def __post_init__(self):
        if not self.servo_rate > 0:
            raise ScenarioError("servo_rate_hz must be > 0")
        if not self.duration > 0:
            raise ScenarioError("duration_s must be > 0")
        if not self.standoff > 0:
            raise ScenarioError("standoff_m must be > 0")
        if self.servo_iterations < 1:
            raise ScenarioError("servo iterations must be >= 1")
        a = np.asarray(self.standoff_axis, dtype=float)
        if a.shape != (3,) or not np.linalg.norm(a) > 0:
            raise ScenarioError("standoff_axis must be a non-zero 3-vector")

    @property
    def dt(self) -> float:
        return 1.0 / self.servo_rate

    @property
    def ticks(self) -> int:
        return int(round(self.duration * self.servo_rate))

    def q_start(self) -> np.ndarray:
        if self.start_config is None:
            return self.model.mid_config
        return np.asarray(self.start_config, dtype=float)


_SCENARIO_KEYS = {
    "name", "model", "camera", "object", "motion", "servo_rate_hz", "standoff_m",
    "standoff_axis", "noise", "solver", "servo", "planner", "approach", "pose_estimation",
    "start_config_rad", "seed", "duration_s", "tracking", "description",
}


def _pose_from_dict(d: dict) -> RigidTransform:
    if "rotation" in d and "rotvec_rad" in d:
        raise ScenarioError("give either rotation or rotvec_rad, not both")
    p = d.get("position_m", d.get("translation_m", [0.0, 0.0, 0.0]))
    if "rotvec_rad" in d:
        return RigidTransform.from_rotvec(d["rotvec_rad"], p)
    rot = d.get("rotation", "identity")
    R = np.eye(3) if rot == "identity" else np.array(rot, dtype=float)
    return RigidTransform(R, p)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera pose (x right, y down, z forward) at ``eye`` looking at ``target``."""
    eye, target, up = (np.asarray(v, dtype=float) for v in (eye, target, up))
    z = target - eye
    z /= np.linalg.norm(z)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        raise ScenarioError("camera up vector is parallel to the viewing direction")
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return RigidTransform(np.column_stack([x, y, z]), eye)


def _camera_pose(d: dict) -> RigidTransform:
    if "look_at" in d:
        la = d["look_at"]
        return look_at(la["eye_m"], la["target_m"], la.get("up", [0.0, 0.0, 1.0]))
    if "extrinsics" in d:
        return _pose_from_dict(d["extrinsics"])
    raise ScenarioError("camera needs 'look_at' or 'extrinsics'")


def _motion(d: dict) -> ObjectMotion:
    if "keyframes" in d:
        kf = sorted(d["keyframes"], key=lambda k: float(k["t_s"]))
        times = tuple(float(k["t_s"]) for k in kf)
        poses = tuple(_pose_from_dict(k) for k in kf)
    elif "pose" in d:
        times, poses = (0.0,), (_pose_from_dict(d["pose"]),)
    else:
        raise ScenarioError("motion needs 'pose' or 'keyframes'")
    if len(set(times)) != len(times):
        raise ScenarioError("keyframe times must be distinct")
    sin = d.get("sinusoid")
    if sin is None:
        return ObjectMotion(times, poses)
    return ObjectMotion(times, poses, np.asarray(sin["amplitude_m"], dtype=float),
                        float(sin["frequency_hz"]), float(sin.get("phase_rad", 0.0)))


def scenario_from_dict(doc: dict, base_dir: str = ".") -> Scenario:
    unknown = set(doc) - _SCENARIO_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    try:
        ref = doc.get("model", "default")
        if ref not in ("default", "iiwa14") and not os.path.isabs(ref):
            ref = os.path.join(base_dir, ref)
        model = resolve_model(ref)
        cam = doc["camera"]
        obj = doc["object"]
        noise = doc.get("noise", {})
        servo = doc.get("servo", {})
        approach = doc.get("approach", {})
        tracking = doc.get("tracking", {})
        kw = dict(
            name=str(doc.get("name", "scenario")),
            model=model,
            intrinsics=intrinsics_from_dict(cam["intrinsics"]),
            camera_pose=_camera_pose(cam),
            template_px=tuple(float(v) for v in obj["size_px"]),
            object_m=tuple(float(v) for v in obj["size_m"]),
            grid=tuple(int(v) for v in obj.get("grid", [10, 8])),
            grid_margin_px=float(obj.get("margin_px", 20.0)),
            motion=_motion(doc["motion"]),
            servo_rate=float(doc.get("servo_rate_hz", 13.0)),
            standoff=float(doc.get("standoff_m", 0.15)),
            standoff_axis=tuple(float(v) for v in doc.get("standoff_axis", [0.0, 0.0, 1.0])),
            noise=NoiseModel(float(noise.get("pixel_sigma_px", 0.0)),
                             float(noise.get("depth_sigma_m", 0.0)),
                             float(noise.get("outlier_fraction", 0.0))),
            solver=DlsParams.from_dict(doc.get("solver", {})),
            servo_iterations=int(servo.get("iterations_per_tick", 25)),
            servo_tol=float(servo.get("tol", 1e-4)),
            wall_budget=bool(servo.get("wall_time_budget", False)),
            planner=PlannerParams.from_dict(doc.get("planner", {})),
            max_joint_speed=float(approach.get("max_joint_speed_rad_s", 0.8)),
            pose=PoseParams.from_dict(doc.get("pose_estimation", {})),
            start_config=(None if doc.get("start_config_rad") is None
                          else np.asarray(doc["start_config_rad"], dtype=float)),
            seed=int(doc.get("seed", 0)),
            duration=float(doc.get("duration_s", 10.0)),
            valid_translation_tol=float(tracking.get("valid_translation_tol_m", 0.01)),
        )
    except KeyError as exc:
        raise ScenarioError(f"missing scenario key {exc}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    sc = Scenario(**kw)
    if sc.start_config is not None:
        if sc.start_config.shape != (model.dof,):
            raise ScenarioError("start_config_rad has the wrong length")
        if not model.within_limits(sc.start_config):
            raise ScenarioError("start_config_rad is outside the joint limits")
    return sc


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"scenario is not valid JSON: {exc}") from None
    return scenario_from_dict(doc, os.path.dirname(os.path.abspath(path)))


def bundled_scenario_path(name: str) -> str:
    from importlib import resources

    return str(resources.files("kinservo.data").joinpath("scenarios").joinpath(f"{name}.json"))


# ---------------------------------------------------------------- synthetic camera

def template_grid(sc: Scenario) -> np.ndarray:
    w, h = sc.template_px
    gx, gy = sc.grid
    m = sc.grid_margin_px
    us = np.linspace(m, w - m, gx)
    vs = np.linspace(m, h - m, gy)
    uu, vv = np.meshgrid(us, vs)
    return np.column_stack([uu.ravel(), vv.ravel()])


def template_to_object(sc: Scenario, uv: np.ndarray) -> np.ndarray:
    """Template pixels to object-frame metres (origin at the template centre,
    x along +u, y along -v, z the outward normal)."""
    w, h = sc.template_px
    W, H = sc.object_m
    return np.column_stack([(uv[:, 0] - w / 2.0) * (W / w), (h / 2.0 - uv[:, 1]) * (H / h),
                            np.zeros(len(uv))])


def render_depth(K: CameraIntrinsics, T_co: RigidTransform, size_m) -> np.ndarray:
    """Depth of the object rectangle per pixel centre; 0 where the ray misses it."""
    W, H = size_m
    vv, uu = np.mgrid[0:K.height, 0:K.width]
    dx = (uu - K.cx) / K.fx
    dy = (vv - K.cy) / K.fy
    n = T_co.R[:, 2]
    denom = n[0] * dx + n[1] * dy + n[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = float(n @ T_co.p) / denom
    X = np.stack([dx * z, dy * z, z], axis=-1) - T_co.p
    local = X @ T_co.R
    hit = (np.isfinite(z) & (z > 0) & (np.abs(local[..., 0]) <= W / 2.0)
           & (np.abs(local[..., 1]) <= H / 2.0))
    return np.where(hit, z, 0.0)


def frame_rng(seed: int, tick: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(tick)])


def synth_frame(sc: Scenario, T_obj: RigidTransform, tick: int,
                rng: Optional[np.random.Generator] = None) -> Frame:
    """Matches and depth image for the object at base-frame pose ``T_obj``."""
    rng = frame_rng(sc.seed, tick) if rng is None else rng
    K = sc.intrinsics
    T_co = sc.camera_pose.inverse() @ T_obj
    if T_co.p[2] <= 1e-6:
        raise ObjectOutOfView("object centre is behind the camera")
    tpl = template_grid(sc)
    Xc = T_co.apply(template_to_object(sc, tpl))
    front = Xc[:, 2] > 1e-6
    img = np.full((len(tpl), 2), np.nan)
    img[front] = K.project(Xc[front])
    inside = front & (img[:, 0] >= 0) & (img[:, 0] <= K.width - 1) \
        & (img[:, 1] >= 0) & (img[:, 1] <= K.height - 1)
    if inside.sum() < 4:
        raise ObjectOutOfView(f"only {int(inside.sum())} template points are in view")
    tpl, img = tpl[inside], img[inside]
    nz = sc.noise
    if nz.pixel_sigma > 0:
        img = img + rng.normal(0.0, nz.pixel_sigma, img.shape)
    n_out = int(round(nz.outlier_fraction * len(tpl) / (1.0 - nz.outlier_fraction)))
    w, h = sc.template_px
    out_tpl = rng.random((n_out, 2)) * [w, h]
    out_img = rng.random((n_out, 2)) * [K.width - 1, K.height - 1]
    matches = np.vstack([np.hstack([tpl, img]), np.hstack([out_tpl, out_img])])
    matches = matches[rng.permutation(len(matches))]
    depth = render_depth(K, T_co, sc.object_m)
    if nz.depth_sigma > 0:
        hit = depth > 0
        depth[hit] += rng.normal(0.0, nz.depth_sigma, int(hit.sum()))
    return Frame(matches=matches, depth=depth, intrinsics=K, object_size_px=sc.template_px,
                 extrinsics=sc.camera_pose, timestamp=tick / sc.servo_rate)


def outlier_labels(sc: Scenario, frame: Frame, T_obj: RigidTransform, tol_px: float = 1e-6):
    """True where a match agrees with the true projection (test/diagnostic helper)."""
    T_co = sc.camera_pose.inverse() @ T_obj
    Xc = T_co.apply(template_to_object(sc, frame.matches[:, :2]))
    proj = sc.intrinsics.project(Xc)
    return np.linalg.norm(proj - frame.matches[:, 2:], axis=1) <= tol_px


# ---------------------------------------------------------------- tracking

def standoff_pose(T_obj: RigidTransform, distance: float, axis=(0.0, 0.0, 1.0)) -> RigidTransform:
    """Grasp-ready pose ``distance`` out along ``axis`` (object frame), tool z facing the object."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = -a
    ref = np.array([1.0, 0.0, 0.0]) if abs(k[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    i = ref - k * (ref @ k)
    i /= np.linalg.norm(i)
    j = np.cross(k, i)
    local = RigidTransform(np.column_stack([i, j, k]), distance * a)
    return T_obj @ local


def pose6(T: RigidTransform) -> np.ndarray:
    e = euler_from_rotation(T.R)
    return np.array([T.p[0], T.p[1], T.p[2], e.roll, e.pitch, e.yaw])


@dataclass
class TickRecord:
    tick: int
    t: float
    phase: str
    target: RigidTransform
    desired: RigidTransform
    estimate: Optional[RigidTransform]
    estimate_valid: bool
    q: np.ndarray
    ee: RigidTransform
    error: np.ndarray
    ik_status: str
    ik_iterations: int
    tracking_valid: bool
    max_step: float = 0.0  # largest single DLS increment this tick (rad)


@dataclass
class TrackingReport:
    scenario: str
    seed: int
    dt: float
    records: list
    approach_ticks: int
    servo_ticks: int
    metrics: MetricsReport
    servo_rmse_axes: np.ndarray  # x, y, z mm; roll, pitch, yaw deg
    tracking_valid_fraction: float
    planner_calls_approach: int
    planner_calls_servo: int
    path_cost: float
    path_waypoints: int
    steady_state_max_error: np.ndarray
    notes: list = field(default_factory=list)

    def servo_records(self) -> list:
        return [r for r in self.records if r.phase == "servo"]


def _servo_step(sc: Scenario, q: np.ndarray, target: RigidTransform):
    budget = 0.5 * sc.dt * 1000.0 if sc.wall_budget else None
    params = replace(sc.solver, max_iters=sc.servo_iterations, max_ms=budget,
                     tol=(sc.servo_tol,) * 6, restart_on_local_min=False)
    return solve_ik(sc.model, target, q, params)


def run_tracking(sc: Scenario, planner: Optional[RRTStar] = None) -> TrackingReport:
    model = sc.model
    planner = planner or RRTStar(model, sc.planner)
    stream = PoseStream(sc.pose)
    q = sc.q_start().copy()
    if not model.within_limits(q):
        raise ScenarioError("start configuration is outside the joint limits")
    records: list[TickRecord] = []
    total = sc.ticks
    notes = []

    def observe(tick: int):
        T_true = sc.motion.pose_at(tick / sc.servo_rate)
        try:
            est = stream.update(synth_frame(sc, T_true, tick))
        except ObjectOutOfView:
            est = None
        return T_true, est

    def record(tick, phase, target, T_true, est, status, iters, max_step=0.0):
        ee = forward_kinematics(model, q)
        desired = standoff_pose(T_true, sc.standoff, sc.standoff_axis)
        valid = est is not None and est.valid
        tv = valid and float(np.linalg.norm(est.pose.p - T_true.p)) <= sc.valid_translation_tol
        records.append(TickRecord(
            tick=tick, t=tick / sc.servo_rate, phase=phase, target=target, desired=desired,
            estimate=est.pose if valid else None, estimate_valid=valid, q=q.copy(), ee=ee,
            error=pose_error(desired, ee), ik_status=status, ik_iterations=iters,
            tracking_valid=bool(tv), max_step=max_step))

    # Phase 1: initial estimate, standoff goal, RRT* approach.
    T_true, est = observe(0)
    if est is None or not est.valid:
        raise ScenarioError("initial object pose could not be estimated")
    target = standoff_pose(est.pose, sc.standoff, sc.standoff_axis)
    goal = goal_from_pose(model, target, q, sc.goal_ik)
    calls_before = planner.calls
    path = planner.plan(q, goal)
    traj = time_parameterize(path, sc.dt, sc.max_joint_speed)
    calls_approach = planner.calls - calls_before
    approach = min(len(traj.q), total)
    if approach < len(traj.q):
        notes.append("approach longer than the scenario duration; servo phase is empty")
    for k in range(approach):
        if k > 0:
            T_true, est = observe(k)
        q = traj.q[k].copy()
        record(k, "approach", target, T_true, est, "Approach", 0)

    # Phase 2: per-tick estimate, target update, bounded DLS iterations.
    calls_mark = planner.calls
    for k in range(approach, total):
        T_true, est = observe(k)
        if est is not None and est.valid:
            target = standoff_pose(est.pose, sc.standoff, sc.standoff_axis)
        out = _servo_step(sc, q, target)
        q = out.q
        record(k, "servo", target, T_true, est, out.status.value, out.iterations,
               max(out.step_history, default=0.0))
    calls_servo = planner.calls - calls_mark

    servo = [r for r in records if r.phase == "servo"]
    span = servo if len(servo) >= 2 else records
    actual = np.array([pose6(r.ee) for r in span])
    desired = np.array([pose6(r.desired) for r in span])
    Q = np.array([r.q for r in span])
    metrics = evaluate(actual, desired, Q, sc.dt)
    rmse_axes = per_axis_rmse(actual, desired)
    frac = float(np.mean([r.tracking_valid for r in servo])) if servo else 0.0
    # Steady state: the second half of the servo phase.
    tail = servo[len(servo) // 2:] if servo else records[-1:]
    ss = np.max(np.abs(np.array([r.error for r in tail])), axis=0)
    return TrackingReport(
        scenario=sc.name, seed=sc.seed, dt=sc.dt, records=records, approach_ticks=approach,
        servo_ticks=len(servo), metrics=metrics, servo_rmse_axes=rmse_axes,
        tracking_valid_fraction=frac, planner_calls_approach=calls_approach,
        planner_calls_servo=calls_servo, path_cost=path.cost, path_waypoints=len(path),
        steady_state_max_error=ss, notes=notes,
    )


def translate_scenario(sc: Scenario, shift) -> Scenario:
    """Same scene moved rigidly by ``shift`` (object script and camera)."""
    shift = np.asarray(shift, dtype=float)
    cam = RigidTransform(sc.camera_pose.R, sc.camera_pose.p + shift)
    return replace(sc, camera_pose=cam, motion=sc.motion.translated(shift))


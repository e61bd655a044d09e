"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 domain error (bad model, unreachable
target, invalid scenario, ...). Diagnostics go to stderr as a single line.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import __version__

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str, what: str) -> np.ndarray:
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{what}: expected comma-separated numbers, got {text!r}") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise UsageError(f"{what}: expected finite numbers, got {text!r}")
    return np.array(vals)


def _pose(text: str, what: str = "pose"):
    from .liegroup import RigidTransform

    v = _floats(text, what)
    if v.size != 6:
        raise UsageError(f"{what}: expected x,y,z,rx,ry,rz (6 numbers), got {v.size}")
    return RigidTransform.from_rotvec(v[3:], v[:3])


def _config(text: str, model, what: str, degrees: bool = False) -> np.ndarray:
    q = _floats(text, what)
    if q.size != model.dof:
        raise UsageError(f"{what}: expected {model.dof} joint values, got {q.size}")
    return np.radians(q) if degrees else q


def _pose_doc(T) -> dict:
    from .liegroup import euler_from_rotation, quaternion_from_rotation, rotvec_from_rotation

    e = euler_from_rotation(T.R)
    return {
        "position_m": T.p.tolist(),
        "rotation": T.R.tolist(),
        "rotvec_rad": rotvec_from_rotation(T.R).tolist(),
        "euler_rad": {"roll": e.roll, "pitch": e.pitch, "yaw": e.yaw, "degenerate": e.degenerate},
        "quaternion_wxyz": quaternion_from_rotation(T.R).tolist(),
    }


def _emit(doc) -> None:
    from .report import _json_safe

    print(json.dumps(_json_safe(doc), indent=1))


# ---------------------------------------------------------------- commands

def cmd_fk(a) -> int:
    from .kinematics import forward_kinematics
    from .robot_model import resolve_model

    model = resolve_model(a.model)
    q = np.array(a.q, dtype=float)
    if q.size != model.dof:
        raise UsageError(f"fk: expected {model.dof} joint values, got {q.size}")
    if a.deg:
        q = np.radians(q)
    _emit({"model": model.name, "q_rad": q.tolist(), "pose": _pose_doc(forward_kinematics(model, q))})
    return EXIT_OK


def cmd_ik(a) -> int:
    from .ik_dls import DlsParams, solve_ik
    from .kinematics import forward_kinematics
    from .robot_model import resolve_model

    model = resolve_model(a.model)
    target = _pose(a.target, "--target")
    seed_q = model.mid_config if a.seed_config is None else _config(a.seed_config, model, "--seed-config")
    params = DlsParams(max_iters=a.max_iters, max_ms=a.max_ms, restart_on_local_min=a.restart,
                       restart_seed=a.seed)
    out = solve_ik(model, target, seed_q, params)
    _emit({"status": out.status.value, "q_rad": out.q.tolist(), "error": out.error.tolist(),
           "iterations": out.iterations, "pose": _pose_doc(forward_kinematics(model, out.q))})
    if not out.converged:
        print(f"ik: did not converge ({out.status.value})", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_plan(a) -> int:
    from .ik_dls import DlsParams
    from .planner import PlannerParams, RRTStar, goal_from_pose, time_parameterize, write_path_csv
    from .robot_model import resolve_model

    model = resolve_model(a.model)
    start = _config(a.start, model, "--start")
    forced = a.goal.startswith("pose:")
    text = a.goal[5:] if forced else a.goal
    vals = _floats(text, "--goal")
    if vals.size == model.dof and not forced:
        goal = vals
    elif vals.size == 6:
        goal = goal_from_pose(model, _pose(text, "--goal"), start,
                              DlsParams(max_ms=None, max_iters=2000, restart_on_local_min=True,
                                        restart_seed=a.seed))
    else:
        raise UsageError(f"--goal: expected {model.dof} joint values or a 6-number pose")
    params = PlannerParams(max_iterations=a.iterations, seed=a.seed, steer_step=a.steer_step)
    path = RRTStar(model, params).plan(start, goal)
    doc = {"cost_rad": path.cost, "straight_line_rad": float(np.linalg.norm(goal - start)),
           "waypoints": len(path), "iterations": path.iterations,
           "goal_rad": goal.tolist()}
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        write_path_csv(os.path.join(a.out, "path.csv"), path.waypoints)
        traj = time_parameterize(path, a.dt, a.max_joint_speed)
        write_path_csv(os.path.join(a.out, "trajectory.csv"), traj.q)
        doc["trajectory_ticks"] = len(traj.q)
        if not a.no_figures:
            from .plotting import path_figure

            path_figure(path.waypoints, os.path.join(a.out, "path.png"))
    _emit(doc)
    return EXIT_OK


def cmd_workspace(a) -> int:
    from .kinematics import sample_workspace, workspace_points, write_point_cloud_csv
    from .robot_model import resolve_model

    model = resolve_model(a.model)
    if a.samples < 1 or not a.voxel > 0:
        raise UsageError("workspace: --samples must be >= 1 and --voxel > 0")
    pts = workspace_points(model, a.samples, a.seed)
    rep = sample_workspace(model, a.samples, a.voxel / 1000.0, a.seed, points=pts)
    doc = {"samples": rep.samples, "seed": rep.seed, "voxel_edge_m": rep.voxel_edge,
           "max_reach_m": rep.max_reach, "volume_m3": rep.volume,
           "occupied_voxels": rep.occupied_voxels}
    if a.out:
        from .report import write_json

        os.makedirs(a.out, exist_ok=True)
        write_json(os.path.join(a.out, "workspace.json"), doc)
        write_point_cloud_csv(os.path.join(a.out, "points.csv"), pts)
        if not a.no_figures:
            from .plotting import workspace_figure

            workspace_figure(pts, os.path.join(a.out, "workspace.png"))
    _emit(doc)
    return EXIT_OK


def cmd_pose(a) -> int:
    from dataclasses import replace

    from .pose_estimation import PoseParams, estimate_pose, load_frame

    frame = load_frame(a.frame)
    est = estimate_pose(frame, replace(PoseParams(), ransac_seed=a.seed))
    doc = {"valid": est.valid, "timestamp_s": est.timestamp, "inliers": est.inliers,
           "matches": est.matches, "reason": est.reason, "debug": est.debug}
    if est.valid:
        doc["pose_base"] = _pose_doc(est.pose)
        doc["pose_camera"] = _pose_doc(est.camera_pose)
    if a.out:
        from .report import write_json

        os.makedirs(a.out, exist_ok=True)
        write_json(os.path.join(a.out, "pose.json"), doc)
        if not a.no_figures and "corners_px" in est.debug:
            from .plotting import pose_figure

            pose_figure(frame.depth, np.array(est.debug["corners_px"]),
                        np.array(est.debug["reference_px"]), os.path.join(a.out, "pose.png"))
    _emit(doc)
    if not est.valid:
        print(f"pose: no valid estimate ({est.reason})", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def _scenario_path(ref: str) -> str:
    from .simulation import bundled_scenario_path

    if os.path.exists(ref):
        return ref
    bundled = bundled_scenario_path(ref)
    if os.path.exists(bundled):
        return bundled
    raise FileNotFoundError(f"no scenario file {ref!r} (bundled: static-object, moving-object)")


def cmd_track(a) -> int:
    from dataclasses import replace

    from .report import write_tracking_outputs
    from .simulation import load_scenario, run_tracking

    sc = load_scenario(_scenario_path(a.scenario))
    if a.seed is not None:
        sc = replace(sc, seed=a.seed)
    rep = run_tracking(sc)
    paths = write_tracking_outputs(rep, a.out, figures=not a.no_figures)
    s = rep.servo_rmse_axes
    print(f"{sc.name}: {len(rep.records)} ticks ({rep.approach_ticks} approach, "
          f"{rep.servo_ticks} servo); tracking-valid {rep.tracking_valid_fraction:.3f}; "
          f"servo RMSE x/y/z {s[0]:.3f}/{s[1]:.3f}/{s[2]:.3f} mm, "
          f"roll/pitch/yaw {s[3]:.3f}/{s[4]:.3f}/{s[5]:.3f} deg")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_metrics(a) -> int:
    from .metrics import evaluate, per_axis_rmse
    from .report import read_pose_trace_csv, write_json, write_metrics_csv

    t, actual, q = read_pose_trace_csv(a.traj)
    td, desired, _ = read_pose_trace_csv(a.desired)
    if len(t) != len(td):
        raise ValueError(f"trajectories have different lengths ({len(t)} vs {len(td)})")
    if len(t) < 2:
        raise ValueError("need at least 2 samples")
    dts = np.diff(t)
    dt = float(dts.mean())
    if np.max(np.abs(dts - dt)) > 1e-6:
        raise ValueError("samples are not uniformly spaced in time")
    if q is None:
        q = actual[:, 3:]  # no joints given: profile the orientation channels instead
    m = evaluate(actual, desired, q, dt)
    rmse_axes = per_axis_rmse(actual, desired)
    doc = m.to_dict()
    doc["rmse_mm_deg"] = rmse_axes.tolist()
    if a.out:
        os.makedirs(a.out, exist_ok=True)
        write_json(os.path.join(a.out, "metrics.json"), doc)
        write_metrics_csv(os.path.join(a.out, "metrics.csv"), m, rmse_axes=rmse_axes)
        if not a.no_figures:
            from .plotting import metrics_figure

            metrics_figure(t, actual, desired, os.path.join(a.out, "metrics.png"))
    _emit(doc)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kinservo", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("fk", help="forward kinematics")
    s.add_argument("model", help="'default', 'iiwa14' or a model JSON path")
    s.add_argument("q", nargs="+", type=float, help="joint values (rad unless --deg)")
    s.add_argument("--deg", action="store_true", help="joint values are in degrees")
    s.set_defaults(fn=cmd_fk)

    s = sub.add_parser("ik", help="damped least-squares inverse kinematics")
    s.add_argument("model")
    s.add_argument("--target", required=True, help="x,y,z,rx,ry,rz (m, rotation vector rad)")
    s.add_argument("--seed-config", help="comma-separated start configuration (rad)")
    s.add_argument("--max-iters", type=int, default=500)
    s.add_argument("--max-ms", type=float, default=None, help="wall-time limit (off by default)")
    s.add_argument("--restart", action="store_true", help="perturb and retry at local minima")
    s.add_argument("--seed", type=int, default=0, help="seed for restart perturbations")
    s.set_defaults(fn=cmd_ik)

    s = sub.add_parser("plan", help="RRT* joint-space path")
    s.add_argument("model")
    s.add_argument("--start", required=True, help="start configuration (rad)")
    s.add_argument("--goal", required=True,
                   help="goal configuration (rad) or pose x,y,z,rx,ry,rz (prefix 'pose:' to force)")
    s.add_argument("--iterations", type=int, default=3000)
    s.add_argument("--steer-step", type=float, default=0.2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dt", type=float, default=1.0 / 13.0)
    s.add_argument("--max-joint-speed", type=float, default=0.8)
    s.add_argument("--out", help="directory for path.csv, trajectory.csv and a figure")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_plan)

    s = sub.add_parser("workspace", help="Monte-Carlo workspace reach and volume")
    s.add_argument("model")
    s.add_argument("--samples", type=int, required=True)
    s.add_argument("--voxel", type=float, required=True, help="voxel edge in mm")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="directory for workspace.json, points.csv and a figure")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_workspace)

    s = sub.add_parser("pose", help="planar object pose from a frame file")
    s.add_argument("frame", help="frame JSON")
    s.add_argument("--seed", type=int, default=0, help="RANSAC seed")
    s.add_argument("--out", help="directory for pose.json and a figure")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_pose)

    s = sub.add_parser("track", help="closed-loop approach + visual servoing simulation")
    s.add_argument("scenario", help="scenario JSON path or bundled name (static-object, moving-object)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_track)

    s = sub.add_parser("metrics", help="trajectory metrics of an actual vs desired trace")
    s.add_argument("traj", help="CSV with t_s,x,y,z,roll,pitch,yaw[,q1..qn]")
    s.add_argument("--desired", required=True, help="CSV in the same format")
    s.add_argument("--out", help="directory for metrics.json, metrics.csv and a figure")
    s.add_argument("--no-figures", action="store_true")
    s.set_defaults(fn=cmd_metrics)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except UsageError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (ValueError, OSError, KeyError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"kinservo: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())

"""Writers for tracking reports, trajectory traces and metric tables.

JSON carries full precision; every CSV float uses 9 significant digits.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np

from .metrics import MetricsReport, derivative_profiles
from .simulation import TrackingReport, pose6

POSE_COLS = ("x", "y", "z", "roll", "pitch", "yaw")


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return f"{v:.9g}"


def _json_safe(x):
    if isinstance(x, float):
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, dict):
        return {k: _json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_json_safe(v) for v in x]
    if isinstance(x, np.ndarray):
        return _json_safe(x.tolist())
    if isinstance(x, (np.floating,)):
        return _json_safe(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_json_safe(doc), fh, indent=1, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) if isinstance(c, float) else c
                        for c in row])


def report_to_dict(rep: TrackingReport) -> dict:
    recs = []
    for r in rep.records:
        recs.append({
            "tick": r.tick, "t_s": r.t, "phase": r.phase,
            "target_pose": pose6(r.target).tolist(),
            "desired_pose": pose6(r.desired).tolist(),
            "estimated_pose": None if r.estimate is None else pose6(r.estimate).tolist(),
            "estimate_valid": r.estimate_valid,
            "q": r.q.tolist(), "ee_pose": pose6(r.ee).tolist(), "error": r.error.tolist(),
            "ik_status": r.ik_status, "ik_iterations": r.ik_iterations,
            "tracking_valid": r.tracking_valid, "max_step_rad": r.max_step,
        })
    n = len(rep.records)
    return {
        "scenario": rep.scenario,
        "seed": rep.seed,
        "dt_s": rep.dt,
        "pose_convention": "x, y, z in m; roll, pitch, yaw in rad",
        "phases": {
            "approach": {"start_tick": 0, "end_tick": rep.approach_ticks},
            "servo": {"start_tick": rep.approach_ticks, "end_tick": n},
        },
        "summary": {
            "ticks": n,
            "tracking_valid_fraction": rep.tracking_valid_fraction,
            "servo_rmse_mm_deg": rep.servo_rmse_axes.tolist(),
            "steady_state_max_abs_error": rep.steady_state_max_error.tolist(),
            "planner_calls_approach": rep.planner_calls_approach,
            "planner_calls_servo": rep.planner_calls_servo,
            "approach_path_cost_rad": rep.path_cost,
            "approach_path_waypoints": rep.path_waypoints,
        },
        "metrics": rep.metrics.to_dict(),
        "notes": list(rep.notes),
        "records": recs,
    }


def write_trace_csv(path, rep: TrackingReport) -> None:
    dof = len(rep.records[0].q) if rep.records else 0
    header = (["tick", "t_s"] + [f"target_{c}" for c in POSE_COLS]
              + [f"est_{c}" for c in POSE_COLS] + [f"q{i + 1}" for i in range(dof)]
              + [f"ee_{c}" for c in POSE_COLS]
              + [f"err_{c}" for c in ("dx", "dy", "dz", "drx", "dry", "drz")])
    rows = []
    for r in rep.records:
        est = pose6(r.estimate) if r.estimate is not None else np.full(6, np.nan)
        rows.append([r.tick, fmt(r.t)] + [fmt(v) for v in pose6(r.target)]
                    + [fmt(v) for v in est] + [fmt(v) for v in r.q]
                    + [fmt(v) for v in pose6(r.ee)] + [fmt(v) for v in r.error])
    _write_rows(path, header, rows)


def write_pose_trace_csv(path, times, poses, q=None) -> None:
    """Trajectory file accepted by the ``metrics`` command."""
    poses = np.asarray(poses, dtype=float)
    dof = 0 if q is None else np.shape(q)[1]
    header = ["t_s", *POSE_COLS] + [f"q{i + 1}" for i in range(dof)]
    rows = []
    for k, t in enumerate(times):
        row = [fmt(t)] + [fmt(v) for v in poses[k]]
        if q is not None:
            row += [fmt(v) for v in q[k]]
        rows.append(row)
    _write_rows(path, header, rows)


def read_pose_trace_csv(path):
    """(times, (N, 6) poses, (N, dof) joints or None) from a trajectory CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trajectory file")
    header = rows[0]
    need = ["t_s", *POSE_COLS]
    if header[:7] != need:
        raise ValueError(f"{path}: header must start with {','.join(need)}")
    data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    if data.ndim != 2 or len(data) == 0:
        raise ValueError(f"{path}: no samples")
    qcols = [i for i, h in enumerate(header) if h.startswith("q")]
    q = data[:, qcols] if qcols else None
    return data[:, 0], data[:, 1:7], q


def write_metrics_csv(path, m: MetricsReport, max_err=None, rmse_axes=None) -> None:
    """Table-shaped summary: a Cartesian block, a per-joint block, a scalar block."""
    dof = len(m.vc)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "x_mm", "y_mm", "z_mm", "roll_deg", "pitch_deg", "yaw_deg"])
        w.writerow(["max_error"] + [fmt(v) for v in (m.max_errors if max_err is None else max_err)])
        if rmse_axes is not None:
            w.writerow(["rmse"] + [fmt(v) for v in rmse_axes])
        w.writerow([])
        w.writerow(["metric"] + [f"theta{i + 1}" for i in range(dof)])
        w.writerow(["vc_deg_s"] + [fmt(v) for v in m.vc])
        w.writerow(["ap_deg_s2"] + [fmt(v) for v in m.ap])
        w.writerow(["jerk_deg_s3"] + [fmt(v) for v in m.jerk])
        w.writerow(["snap_deg_s4"] + [fmt(v) for v in m.snap])
        w.writerow(["smoothness"] + [fmt(v) for v in m.joint_smoothness])
        w.writerow([])
        w.writerow(["metric", "value"])
        for name, v in (("s_func", m.s_func), ("length_m", m.length), ("rmse_pos_m", m.rmse_pos),
                        ("rmse_roll_rad", m.rmse_roll), ("rmse_pitch_rad", m.rmse_pitch),
                        ("rmse_yaw_rad", m.rmse_yaw), ("rmse_orient_rad", m.rmse_orient)):
            w.writerow([name, fmt(v)])
        w.writerow(["short_trace", str(bool(m.short_trace)).lower()])


def derivative_series(q, dt: float) -> dict:
    """Per-tick finite-difference velocity ... snap in degrees (for plotting)."""
    th = np.degrees(np.asarray(q, dtype=float))
    out, x = {}, th
    for name in ("velocity", "acceleration", "jerk", "snap"):
        x = (x[1:] - x[:-1]) / dt
        out[name] = x
    return out


def write_profile_csvs(out_dir, q, dt: float) -> list:
    units = {"velocity": "deg_s", "acceleration": "deg_s2", "jerk": "deg_s3", "snap": "deg_s4"}
    paths = []
    for name, series in derivative_series(q, dt).items():
        p = os.path.join(out_dir, f"{name}.csv")
        dof = np.shape(q)[1]
        rows = [[fmt(k * dt)] + [fmt(v) for v in series[k]] for k in range(len(series))]
        _write_rows(p, ["t_s"] + [f"theta{i + 1}_{units[name]}" for i in range(dof)], rows)
        paths.append(p)
    return paths


def write_tracking_outputs(rep: TrackingReport, out_dir, figures: bool = True) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    p = os.path.join(out_dir, "report.json")
    write_json(p, report_to_dict(rep))
    paths.append(p)
    p = os.path.join(out_dir, "trace.csv")
    write_trace_csv(p, rep)
    paths.append(p)
    p = os.path.join(out_dir, "metrics.csv")
    write_metrics_csv(p, rep.metrics, rmse_axes=rep.servo_rmse_axes)
    paths.append(p)
    times = [r.t for r in rep.records]
    Q = np.array([r.q for r in rep.records])
    p = os.path.join(out_dir, "actual_traj.csv")
    write_pose_trace_csv(p, times, [pose6(r.ee) for r in rep.records], Q)
    paths.append(p)
    p = os.path.join(out_dir, "desired_traj.csv")
    write_pose_trace_csv(p, times, [pose6(r.desired) for r in rep.records])
    paths.append(p)
    if len(Q) >= 2:
        paths += write_profile_csvs(out_dir, Q, rep.dt)
    if figures:
        from .plotting import tracking_figures

        paths += tracking_figures(rep, out_dir)
    return paths


def profile_table(q, dt: float) -> dict:
    prof = derivative_profiles(q, dt)
    return {"vc": prof.vc, "ap": prof.ap, "jerk": prof.jerk, "snap": prof.snap,
            "short_trace": prof.short_trace}

"""Matplotlib figures written next to the CSV/JSON outputs (Agg backend)."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .liegroup import wrap_angle  # noqa: E402
from .report import derivative_series  # noqa: E402
from .simulation import TrackingReport, pose6  # noqa: E402

_META = {"Software": None}  # keep PNG bytes independent of the matplotlib version


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def _phase_line(ax, rep: TrackingReport) -> None:
    if rep.approach_ticks and rep.servo_ticks:
        ax.axvline(rep.approach_ticks * rep.dt, color="0.6", ls="--", lw=0.8)


def tracking_figures(rep: TrackingReport, out_dir) -> list:
    t = np.array([r.t for r in rep.records])
    err = np.array([r.error for r in rep.records])
    Q = np.array([r.q for r in rep.records])
    paths = []

    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5.5), sharex=True)
    for k, name in enumerate(("x", "y", "z")):
        a1.plot(t, err[:, k] * 1000.0, label=name)
    for k, name in enumerate(("rx", "ry", "rz")):
        a2.plot(t, np.degrees(err[:, 3 + k]), label=name)
    a1.set_ylabel("position error [mm]")
    a2.set_ylabel("rotation error [deg]")
    a2.set_xlabel("time [s]")
    for ax in (a1, a2):
        _phase_line(ax, rep)
        ax.legend(loc="upper right", fontsize=8)
        ax.grid(alpha=0.3)
    a1.set_title(f"{rep.scenario}: end-effector error vs. true standoff")
    paths.append(_save(fig, os.path.join(out_dir, "tracking_error.png")))

    fig, ax = plt.subplots(figsize=(8, 4))
    for j in range(Q.shape[1]):
        ax.plot(t, np.degrees(Q[:, j]), label=f"θ{j + 1}")
    _phase_line(ax, rep)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("joint angle [deg]")
    ax.legend(ncol=4, fontsize=8)
    ax.grid(alpha=0.3)
    paths.append(_save(fig, os.path.join(out_dir, "joints.png")))

    if len(Q) >= 5:
        series = derivative_series(Q, rep.dt)
        units = ("deg/s", "deg/s²", "deg/s³", "deg/s⁴")
        fig, axes = plt.subplots(4, 1, figsize=(8, 9), sharex=True)
        for ax, (name, s), unit in zip(axes, series.items(), units):
            ts = np.arange(len(s)) * rep.dt
            for j in range(s.shape[1]):
                ax.plot(ts, s[:, j], lw=0.8)
            ax.set_ylabel(f"{name}\n[{unit}]")
            ax.grid(alpha=0.3)
        axes[-1].set_xlabel("time [s]")
        paths.append(_save(fig, os.path.join(out_dir, "joint_profiles.png")))

    est = np.array([pose6(r.estimate)[:3] if r.estimate is not None else [np.nan] * 3
                    for r in rep.records])
    des = np.array([r.desired.p for r in rep.records])
    ee = np.array([r.ee.p for r in rep.records])
    fig, axes = plt.subplots(3, 1, figsize=(8, 6.5), sharex=True)
    for k, ax in enumerate(axes):
        ax.plot(t, des[:, k], color="k", lw=1.0, label="desired")
        ax.plot(t, ee[:, k], lw=1.0, label="end effector")
        ax.plot(t, est[:, k], ".", ms=2, label="object estimate")
        ax.set_ylabel(f"{'xyz'[k]} [m]")
        ax.grid(alpha=0.3)
        _phase_line(ax, rep)
    axes[0].legend(fontsize=8, loc="upper right")
    axes[-1].set_xlabel("time [s]")
    paths.append(_save(fig, os.path.join(out_dir, "positions.png")))
    return paths


def workspace_figure(points: np.ndarray, path, max_points: int = 20000) -> str:
    pts = points[:max_points]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4.2))
    a1.scatter(pts[:, 0], pts[:, 1], s=0.3, alpha=0.3)
    a1.set_xlabel("x [m]")
    a1.set_ylabel("y [m]")
    a1.set_aspect("equal")
    a2.scatter(np.hypot(pts[:, 0], pts[:, 1]), pts[:, 2], s=0.3, alpha=0.3)
    a2.set_xlabel("radial distance [m]")
    a2.set_ylabel("z [m]")
    a2.set_aspect("equal")
    fig.suptitle("end-effector workspace samples")
    return _save(fig, path)


def path_figure(waypoints: np.ndarray, path) -> str:
    fig, ax = plt.subplots(figsize=(8, 4))
    for j in range(waypoints.shape[1]):
        ax.plot(np.degrees(waypoints[:, j]), marker=".", ms=3, label=f"θ{j + 1}")
    ax.set_xlabel("waypoint")
    ax.set_ylabel("joint angle [deg]")
    ax.legend(ncol=4, fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def pose_figure(depth: np.ndarray, corners, refs, path) -> str:
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    shown = np.where(depth > 0, depth, np.nan)
    im = ax.imshow(shown, cmap="viridis")
    fig.colorbar(im, ax=ax, label="depth [m]")
    c = np.vstack([corners, corners[:1]])
    ax.plot(c[:, 0], c[:, 1], "r-", lw=1.2, label="template corners")
    ax.plot(refs[:, 0], refs[:, 1], "wo", ms=4, label="reference points")
    ax.legend(fontsize=8, loc="lower right")
    return _save(fig, path)


def metrics_figure(times, actual, desired, path) -> str:
    err = np.asarray(actual) - np.asarray(desired)
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
    for k, n in enumerate("xyz"):
        a1.plot(times, err[:, k] * 1000.0, label=n)
    for k, n in enumerate(("roll", "pitch", "yaw")):
        a2.plot(times, np.degrees(wrap_angle(err[:, 3 + k])), label=n)
    a1.set_ylabel("error [mm]")
    a2.set_ylabel("error [deg]")
    a2.set_xlabel("time [s]")
    for ax in (a1, a2):
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    return _save(fig, path)

"""Planar-object pose from template-to-image matches and a depth image.

Pipeline: DLT homography inside RANSAC, reference points pushed through the
homography, depth lookup with fallbacks, pinhole back-projection, object frame
from the three 3D points, camera-to-base transform, temporal smoothing.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .liegroup import (
    EulerAngles,
    RigidTransform,
    euler_from_rotation,
    quaternion_from_rotation,
    rotation_from_quaternion,
    slerp,
)


class PoseEstimationError(ValueError):
    pass


class DegenerateConfiguration(PoseEstimationError):
    pass


class PointAtInfinity(PoseEstimationError):
    pass


class InsufficientMatches(PoseEstimationError):
    pass


class NoConsensus(PoseEstimationError):
    pass


class InvalidDepth(PoseEstimationError):
    pass


class NoValidDepthInPatch(PoseEstimationError):
    pass


class CollinearPoints(PoseEstimationError):
    pass


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def project(self, X) -> np.ndarray:
        """Pixel coordinates of camera-frame points (..., 3)."""
        X = np.asarray(X, dtype=float)
        return np.stack([self.fx * X[..., 0] / X[..., 2] + self.cx,
                         self.fy * X[..., 1] / X[..., 2] + self.cy], axis=-1)


@dataclass(frozen=True)
class PoseParams:
    ransac_threshold: float = 3.0
    ransac_confidence: float = 0.995
    ransac_max_trials: int = 2000
    ransac_seed: int = 0
    patch_radius: int = 5
    max_range: float = 10.0
    smoothing: float = 0.6
    min_corner_angle: float = 1e-3
    min_aspect: float = 0.05

    @classmethod
    def from_dict(cls, d: dict) -> PoseParams:
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown pose-estimation key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class PlanarPoseEstimate:
    pose: RigidTransform
    euler: EulerAngles
    inliers: int
    matches: int
    valid: bool
    timestamp: float
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    camera_pose: Optional[RigidTransform] = None
    reason: str = ""
    debug: dict = field(default_factory=dict)

    @classmethod
    def invalid(cls, timestamp: float, matches: int, reason: str, inliers: int = 0):
        I = RigidTransform.identity()
        return cls(I, EulerAngles(0.0, 0.0, 0.0), inliers, matches, False, timestamp, reason=reason)


# ---------------------------------------------------------------- homography

def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to 0 and the mean radius to sqrt(2)."""
    c = pts.mean(axis=0)
    r = np.mean(np.linalg.norm(pts - c, axis=1))
    if r < 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / r
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _collinear(pts: np.ndarray, rel: float = 1e-9) -> bool:
    """True when the 2D points span less than a plane (rank < 2 after centring)."""
    if len(pts) < 3:
        return True
    c = pts - pts.mean(axis=0)
    sv = np.linalg.svd(c, compute_uv=False)
    return sv[1] <= rel * max(sv[0], 1e-300)


def _any_three_collinear(pts: np.ndarray, rel: float = 1e-6) -> bool:
    n = len(pts)
    scale = max(float(np.ptp(pts, axis=0).max()), 1e-12)
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                u, v = pts[b] - pts[a], pts[c] - pts[a]
                if abs(u[0] * v[1] - u[1] * v[0]) <= rel * scale * scale:
                    return True
    return False


def normalize_homography(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=float)
    if abs(H[2, 2]) > 1e-12:
        H = H / H[2, 2]
    else:
        H = H / np.linalg.norm(H)
    return H


def estimate_homography_dlt(src, dst) -> np.ndarray:
    """Normalized DLT homography mapping ``src`` (template) points to ``dst``."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientMatches(f"need at least 4 correspondences, got {len(src)}")
    if _collinear(src) or _collinear(dst):
        raise DegenerateConfiguration("points are collinear")
    if len(src) == 4 and (_any_three_collinear(src) or _any_three_collinear(dst)):
        raise DegenerateConfiguration("three of the four points are collinear")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = src @ Ts[:2, :2].T + Ts[:2, 2]
    d = dst @ Td[:2, :2].T + Td[:2, 2]
    n = len(s)
    A = np.zeros((2 * n, 9))
    x, y = s[:, 0], s[:, 1]
    u, v = d[:, 0], d[:, 1]
    A[0::2, 0], A[0::2, 1], A[0::2, 2] = -x, -y, -1.0
    A[0::2, 6], A[0::2, 7], A[0::2, 8] = u * x, u * y, u
    A[1::2, 3], A[1::2, 4], A[1::2, 5] = -x, -y, -1.0
    A[1::2, 6], A[1::2, 7], A[1::2, 8] = v * x, v * y, v
    _, sv, Vt = np.linalg.svd(A)
    if len(sv) >= 9 and sv[7] <= 1e-10 * sv[0]:
        raise DegenerateConfiguration("rank-deficient DLT system")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    H = normalize_homography(H)
    if abs(np.linalg.det(H)) <= 1e-12:
        raise DegenerateConfiguration("singular homography")
    return H


def project(H, point) -> np.ndarray:
    """Image of ``point`` (or an (n, 2) array of points) under H."""
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 2)
    h = pts @ np.asarray(H, dtype=float)[:, :2].T + np.asarray(H, dtype=float)[:, 2]
    if np.any(np.abs(h[:, 2]) < 1e-12):
        raise PointAtInfinity("point maps to infinity")
    out = h[:, :2] / h[:, 2:3]
    return out[0] if single else out


def _project_unchecked(H, pts) -> np.ndarray:
    h = pts @ H[:, :2].T + H[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        return h[:, :2] / h[:, 2:3]


def symmetric_error(H, src, dst) -> np.ndarray:
    """RMS of forward and backward transfer distances per correspondence."""
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full(len(src), np.inf)
    fwd = np.linalg.norm(_project_unchecked(H, src) - dst, axis=1)
    bwd = np.linalg.norm(_project_unchecked(Hinv, dst) - src, axis=1)
    err = np.sqrt(0.5 * (fwd * fwd + bwd * bwd))
    return np.where(np.isfinite(err), err, np.inf)


def ransac_homography(src, dst, threshold: float = 3.0, confidence: float = 0.995,
                      max_trials: int = 2000, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Robust homography; returns (H, inlier mask). Deterministic per seed."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < 4:
        raise InsufficientMatches(f"need at least 4 matches, got {n}")
    rng = np.random.default_rng(seed)
    best_mask = np.zeros(n, dtype=bool)
    best_count, best_score = 0, math.inf
    needed = max_trials
    trial = 0
    while trial < min(needed, max_trials):
        trial += 1
        idx = rng.choice(n, 4, replace=False)
        try:
            H = estimate_homography_dlt(src[idx], dst[idx])
        except PoseEstimationError:
            continue
        err = symmetric_error(H, src, dst)
        mask = err < threshold
        count = int(mask.sum())
        score = float(np.sum(err[mask]))
        if count > best_count or (count == best_count and count > 0 and score < best_score):
            best_mask, best_count, best_score = mask, count, score
            w = count / n
            if w >= 1.0:
                needed = trial
            else:
                denom = math.log(max(1.0 - w ** 4, 1e-300))
                needed = int(math.ceil(math.log(1.0 - confidence) / denom)) if denom < 0 else max_trials
    if best_count < 4:
        raise NoConsensus(f"best consensus set has {best_count} matches")
    H = estimate_homography_dlt(src[best_mask], dst[best_mask])
    # One re-scoring pass with the refit model; keep it only if it does not shrink the set.
    mask = symmetric_error(H, src, dst) < threshold
    if mask.sum() >= best_count and not np.array_equal(mask, best_mask):
        try:
            H2 = estimate_homography_dlt(src[mask], dst[mask])
            H, best_mask = H2, mask
        except PoseEstimationError:
            pass
    return H, best_mask


# ---------------------------------------------------------------- geometry

def reference_points(w: float, h: float) -> np.ndarray:
    """Template centre, right-edge midpoint and top-edge midpoint."""
    if not (w > 0 and h > 0):
        raise ValueError("object size must be positive")
    return np.array([[w / 2.0, h / 2.0], [w, h / 2.0], [w / 2.0, 0.0]])


def locate_reference_points(w: float, h: float, H) -> np.ndarray:
    return project(H, reference_points(w, h))


def template_corners(w: float, h: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def back_project(pixel, depth: float, K: CameraIntrinsics) -> np.ndarray:
    if not (math.isfinite(depth) and depth > 0.0):
        raise InvalidDepth(f"depth {depth!r} is not a positive finite value")
    u, v = float(pixel[0]), float(pixel[1])
    return np.array([(u - K.cx) * depth / K.fx, (v - K.cy) * depth / K.fy, depth])


def _valid_depth(d, max_range: float):
    return np.isfinite(d) & (d > 0.0) & (d <= max_range)


def recover_corner_depth(depth: np.ndarray, pixel, patch_radius: int = 5,
                         max_range: float = 10.0) -> float:
    """Depth at the nearest pixel, else the nearest valid depth in the patch.

    Ties in distance go to the smaller row, then the smaller column.
    """
    depth = np.asarray(depth, dtype=float)
    rows, cols = depth.shape
    c, r = int(round(float(pixel[0]))), int(round(float(pixel[1])))
    if not (0 <= r < rows and 0 <= c < cols):
        raise NoValidDepthInPatch(f"pixel {tuple(pixel)} lies outside the image")
    if _valid_depth(depth[r, c], max_range):
        return float(depth[r, c])
    r0, r1 = max(0, r - patch_radius), min(rows, r + patch_radius + 1)
    c0, c1 = max(0, c - patch_radius), min(cols, c + patch_radius + 1)
    patch = depth[r0:r1, c0:c1]
    ok = _valid_depth(patch, max_range)
    if not np.any(ok):
        raise NoValidDepthInPatch(f"no valid depth within {patch_radius} px of {(c, r)}")
    rr, cc = np.nonzero(ok)  # row-major order gives the tie-break for free
    d2 = (rr + r0 - r) ** 2 + (cc + c0 - c) ** 2
    k = int(np.argmin(d2))
    return float(patch[rr[k], cc[k]])


def _inside_quad(quad: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Points inside a convex quadrilateral (either winding)."""
    signs = []
    for a, b in zip(quad, np.roll(quad, -1, axis=0)):
        signs.append((b[0] - a[0]) * (v - a[1]) - (b[1] - a[1]) * (u - a[0]))
    s = np.stack(signs)
    return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)


def plane_depth(depth: np.ndarray, quad: np.ndarray, pixel, max_range: float = 10.0) -> float:
    """Depth at ``pixel`` from a plane fitted to valid depths inside ``quad``.

    Inverse depth is affine in pixel coordinates for a plane seen by a pinhole
    camera, so the fit is linear least squares on 1/z.
    """
    depth = np.asarray(depth, dtype=float)
    rows, cols = depth.shape
    c0 = max(0, int(math.floor(quad[:, 0].min())))
    c1 = min(cols, int(math.ceil(quad[:, 0].max())) + 1)
    r0 = max(0, int(math.floor(quad[:, 1].min())))
    r1 = min(rows, int(math.ceil(quad[:, 1].max())) + 1)
    if c0 >= c1 or r0 >= r1:
        raise NoValidDepthInPatch("object quadrilateral lies outside the image")
    vv, uu = np.mgrid[r0:r1, c0:c1]
    sub = depth[r0:r1, c0:c1]
    sel = _inside_quad(quad, uu.astype(float), vv.astype(float)) & _valid_depth(sub, max_range)
    if sel.sum() < 3:
        raise NoValidDepthInPatch("too few valid depths inside the object")
    A = np.column_stack([uu[sel], vv[sel], np.ones(int(sel.sum()))]).astype(float)
    coef, *_ = np.linalg.lstsq(A, 1.0 / sub[sel], rcond=None)
    inv = coef[0] * float(pixel[0]) + coef[1] * float(pixel[1]) + coef[2]
    if not inv > 0.0:
        raise NoValidDepthInPatch("plane fit gives a non-positive depth")
    return 1.0 / inv


def fit_object_frame(p_c, p_x, p_y, min_angle: float = 1e-3) -> RigidTransform:
    """Orthonormal frame at ``p_c``: i toward ``p_x``, k normal to the plane, j = k x i."""
    p_c, p_x, p_y = (np.asarray(p, dtype=float) for p in (p_c, p_x, p_y))
    x, y = p_x - p_c, p_y - p_c
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx < 1e-12 or ny < 1e-12:
        raise CollinearPoints("reference points coincide")
    kz = np.cross(x, y)
    sin_angle = np.linalg.norm(kz) / (nx * ny)
    if sin_angle < math.sin(min_angle):
        raise CollinearPoints("reference points are collinear")
    i = x / nx
    k = kz / np.linalg.norm(kz)
    j = np.cross(k, i)
    j /= np.linalg.norm(j)
    return RigidTransform(np.column_stack([i, j, k]), p_c)


def camera_to_base(pose: RigidTransform, extrinsics: RigidTransform) -> RigidTransform:
    return extrinsics @ pose


def temporal_filter(previous: Optional[PlanarPoseEstimate], incoming: PlanarPoseEstimate,
                    smoothing: float) -> PlanarPoseEstimate:
    """Exponential smoothing of translation, slerp of orientation.

    ``smoothing`` is the weight of the incoming sample.
    """
    if not 0.0 <= smoothing <= 1.0:
        raise ValueError("smoothing must be in [0, 1]")
    if previous is None or not previous.valid or not incoming.valid:
        return incoming
    lam = smoothing
    p = lam * incoming.pose.p + (1.0 - lam) * previous.pose.p
    q = slerp(quaternion_from_rotation(previous.pose.R), quaternion_from_rotation(incoming.pose.R), lam)
    R = rotation_from_quaternion(q)
    return replace(incoming, pose=RigidTransform(R, p), euler=euler_from_rotation(R), quaternion=q)


class PoseStream:
    """Per-stream estimator holding the temporal filter state (one thread at a time)."""

    def __init__(self, params: PoseParams = PoseParams()):
        self.params = params
        self.last: Optional[PlanarPoseEstimate] = None

    def update(self, frame: "Frame") -> PlanarPoseEstimate:
        raw = estimate_pose(frame, self.params)
        if not raw.valid:
            return raw
        out = temporal_filter(self.last, raw, self.params.smoothing)
        self.last = out
        return out


# ---------------------------------------------------------------- pipeline

@dataclass
class Frame:
    matches: np.ndarray  # (n, 4) rows u, v, u', v'
    depth: np.ndarray  # (height, width) metres, 0 / NaN invalid
    intrinsics: CameraIntrinsics
    object_size_px: tuple
    extrinsics: RigidTransform = field(default_factory=RigidTransform.identity)
    timestamp: float = 0.0


def _corner_depth(depth, pixel, quad, params: PoseParams) -> float:
    try:
        return recover_corner_depth(depth, pixel, params.patch_radius, params.max_range)
    except NoValidDepthInPatch:
        return plane_depth(depth, quad, pixel, params.max_range)


def _quad_ok(quad: np.ndarray, params: PoseParams) -> bool:
    """Reject nearly collinear corners and extremely acute aspect ratios."""
    edges = np.roll(quad, -1, axis=0) - quad
    lengths = np.linalg.norm(edges, axis=1)
    if np.any(lengths < 1e-9):
        return False
    for a in range(4):
        e1, e2 = edges[a - 1], edges[a]
        sin_corner = abs(e1[0] * e2[1] - e1[1] * e2[0]) / (lengths[a - 1] * lengths[a])
        if sin_corner < math.sin(params.min_corner_angle):
            return False
    return lengths.min() / lengths.max() >= params.min_aspect


def estimate_pose(frame: Frame, params: PoseParams = PoseParams()) -> PlanarPoseEstimate:
    """Single-frame pose (no temporal filtering); invalid frames carry ``valid=False``."""
    m = np.asarray(frame.matches, dtype=float).reshape(-1, 4)
    n = len(m)
    ts = float(frame.timestamp)
    w, h = frame.object_size_px
    K = frame.intrinsics
    try:
        H, mask = ransac_homography(m[:, :2], m[:, 2:], params.ransac_threshold,
                                    params.ransac_confidence, params.ransac_max_trials,
                                    params.ransac_seed)
    except PoseEstimationError as exc:
        return PlanarPoseEstimate.invalid(ts, n, f"homography: {exc}")
    inliers = int(mask.sum())
    try:
        corners = project(H, template_corners(w, h))
        refs = locate_reference_points(w, h, H)
    except PointAtInfinity as exc:
        return PlanarPoseEstimate.invalid(ts, n, f"projection: {exc}", inliers)
    debug = {"corners_px": corners.tolist(), "reference_px": refs.tolist(),
             "homography": H.tolist()}
    if not _quad_ok(corners, params):
        est = PlanarPoseEstimate.invalid(ts, n, "degenerate corner geometry", inliers)
        est.debug = debug
        return est
    try:
        pts = [back_project(px, _corner_depth(frame.depth, px, corners, params), K) for px in refs]
        cam = fit_object_frame(*pts, min_angle=params.min_corner_angle)
    except PoseEstimationError as exc:
        est = PlanarPoseEstimate.invalid(ts, n, f"depth/frame: {exc}", inliers)
        est.debug = debug
        return est
    base = camera_to_base(cam, frame.extrinsics)
    debug["points_camera_m"] = [p.tolist() for p in pts]
    return PlanarPoseEstimate(
        pose=base, euler=euler_from_rotation(base.R), inliers=inliers, matches=n,
        valid=True, timestamp=ts, quaternion=quaternion_from_rotation(base.R),
        camera_pose=cam, debug=debug,
    )


# ---------------------------------------------------------------- frame files

_FRAME_KEYS = {"timestamp_s", "object_size_px", "intrinsics", "extrinsics", "matches", "depth"}


def intrinsics_from_dict(d: dict) -> CameraIntrinsics:
    return CameraIntrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                            int(d["width"]), int(d["height"]))


def transform_from_dict(d: dict) -> RigidTransform:
    """{"rotation": rows or "identity", "translation_m": [3]}."""
    rot = d.get("rotation", "identity")
    R = np.eye(3) if rot == "identity" else np.array(rot, dtype=float)
    return RigidTransform(R, d.get("translation_m", [0.0, 0.0, 0.0]))


def transform_to_dict(T: RigidTransform) -> dict:
    return {"rotation": T.R.tolist(), "translation_m": T.p.tolist()}


def read_depth_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [[float(v) for v in row] for row in csv.reader(fh) if row]
    return np.array(rows, dtype=np.float32).astype(float)


def write_depth_csv(path, depth: np.ndarray) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(depth, dtype=np.float32):
            w.writerow([repr(float(v)) if np.isfinite(v) else "nan" for v in row])


def load_frame(path) -> Frame:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    unknown = set(doc) - _FRAME_KEYS
    if unknown:
        raise ValueError(f"unknown frame key(s): {', '.join(sorted(unknown))}")
    K = intrinsics_from_dict(doc["intrinsics"])
    dep = doc["depth"]
    if dep.get("encoding") != "csv-f32":
        raise ValueError(f"unsupported depth encoding {dep.get('encoding')!r}")
    dpath = dep["path"]
    if not os.path.isabs(dpath):
        dpath = os.path.join(os.path.dirname(os.path.abspath(path)), dpath)
    depth = read_depth_csv(dpath)
    if depth.shape != (K.height, K.width):
        raise ValueError(f"depth is {depth.shape}, intrinsics say {(K.height, K.width)}")
    ext = doc.get("extrinsics")
    return Frame(
        matches=np.array(doc["matches"], dtype=float).reshape(-1, 4),
        depth=depth,
        intrinsics=K,
        object_size_px=tuple(float(v) for v in doc["object_size_px"]),
        extrinsics=RigidTransform.identity() if ext is None else transform_from_dict(ext),
        timestamp=float(doc.get("timestamp_s", 0.0)),
    )


def save_frame(path, frame: Frame, depth_name: Optional[str] = None) -> None:
    depth_name = depth_name or os.path.splitext(os.path.basename(path))[0] + "_depth.csv"
    write_depth_csv(os.path.join(os.path.dirname(os.path.abspath(path)), depth_name), frame.depth)
    K = frame.intrinsics
    doc = {
        "timestamp_s": frame.timestamp,
        "object_size_px": list(frame.object_size_px),
        "intrinsics": {"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy,
                       "width": K.width, "height": K.height},
        "extrinsics": transform_to_dict(frame.extrinsics),
        "matches": np.asarray(frame.matches).tolist(),
        "depth": {"encoding": "csv-f32", "path": depth_name},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)

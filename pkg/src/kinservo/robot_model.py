"""Robot descriptions: screw axes, home pose, joint limits and link lengths.

Model files are JSON in millimetres and degrees; everything in memory is in
metres and radians.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np

from .liegroup import RigidTransform, is_rotation, screw_from_axis_point

LINK_KEYS = ("d_bc", "d_cd", "d_de", "d_eg", "d_gf")
_TOP_KEYS = {"name", "dof", "joints", "home", "links_mm", "notes"}
_JOINT_KEYS = {"omega", "point", "v", "limits_deg", "max_speed_deg_s"}
_HOME_KEYS = {"translation_mm", "rotation"}


class ModelParseError(ValueError):
    """The model document is not well-formed."""


class ModelValidationError(ValueError):
    """The model document parses but violates a model invariant."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass(frozen=True, eq=False)
class JointSpec:
    screw: np.ndarray
    lower: float
    upper: float
    max_speed: Optional[float] = None

    def __post_init__(self):
        s = np.array(self.screw, dtype=float).reshape(6)
        s.setflags(write=False)
        object.__setattr__(self, "screw", s)


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    joints: tuple[JointSpec, ...]
    home: RigidTransform
    links: dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        object.__setattr__(self, "links", dict(self.links))
        screws = np.array([j.screw for j in self.joints], dtype=float).reshape(-1, 6)
        screws.setflags(write=False)
        object.__setattr__(self, "_screws", screws)

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def screws(self) -> np.ndarray:
        """(dof, 6) screw axes in the base frame, rows (omega, v)."""
        return self._screws

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])

    @property
    def mid_config(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def segment_sum(self) -> float:
        """Total length of the link segments from base to end effector (m)."""
        return float(sum(self.links[k] for k in LINK_KEYS if k in self.links))

    def within_limits(self, q, tol: float = 0.0) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clip(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def with_limits(self, lower, upper) -> RobotModel:
        joints = [
            JointSpec(j.screw, float(lo), float(hi), j.max_speed)
            for j, lo, hi in zip(self.joints, lower, upper)
        ]
        return RobotModel(self.name, joints, self.home, self.links, self.notes)


def validate_model(model: RobotModel, declared_dof: Optional[int] = None) -> list[str]:
    """One diagnostic string per violated invariant, ordered by joint index."""
    diags: list[str] = []
    if declared_dof is not None and declared_dof != model.dof:
        diags.append(f"dof-mismatch declared={declared_dof} joints={model.dof}")
    if model.dof < 1:
        diags.append("no-joints")
    for idx, j in enumerate(model.joints, start=1):
        s = j.screw
        if not np.all(np.isfinite(s)):
            diags.append(f"screw-finite joint={idx}")
        else:
            wn = float(np.linalg.norm(s[:3]))
            vn = float(np.linalg.norm(s[3:]))
            ok = abs(wn - 1.0) <= 1e-9 or (wn == 0.0 and abs(vn - 1.0) <= 1e-9)
            if not ok:
                diags.append(f"screw-norm joint={idx}")
        if not (math.isfinite(j.lower) and math.isfinite(j.upper)) or not j.lower < j.upper:
            diags.append(f"limit-order joint={idx}")
        if j.max_speed is not None and not j.max_speed > 0.0:
            diags.append(f"max-speed joint={idx}")
    if not is_rotation(model.home.R):
        diags.append("home-rotation")
    if not np.all(np.isfinite(model.home.p)):
        diags.append("home-translation")
    for key in LINK_KEYS:
        if key in model.links and not model.links[key] > 0.0:
            diags.append(f"link-length {key}")
    return diags


def _vec(x, n: int, what: str) -> np.ndarray:
    if not isinstance(x, list) or len(x) != n:
        raise ModelParseError(f"{what} must be a list of {n} numbers")
    try:
        return np.array([float(v) for v in x], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"{what} must be numeric") from exc


def _reject_unknown(d: dict, allowed: set, where: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ModelParseError(f"unknown key(s) in {where}: {', '.join(extra)}")


def model_from_dict(doc: dict) -> RobotModel:
    if not isinstance(doc, dict):
        raise ModelParseError("model document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "model")
    for key in ("name", "dof", "joints", "home"):
        if key not in doc:
            raise ModelParseError(f"missing key: {key}")
    joints_doc = doc["joints"]
    if not isinstance(joints_doc, list):
        raise ModelParseError("joints must be a list")
    try:
        dof = int(doc["dof"])
    except (TypeError, ValueError) as exc:
        raise ModelParseError("dof must be an integer") from exc

    joints = []
    for idx, jd in enumerate(joints_doc, start=1):
        if not isinstance(jd, dict):
            raise ModelParseError(f"joint {idx} must be an object")
        _reject_unknown(jd, _JOINT_KEYS, f"joint {idx}")
        omega = _vec(jd.get("omega"), 3, f"joint {idx} omega")
        if ("point" in jd) == ("v" in jd):
            raise ModelParseError(f"joint {idx} needs exactly one of point / v")
        if "point" in jd:
            v = screw_from_axis_point(omega, _vec(jd["point"], 3, f"joint {idx} point") / 1000.0)[3:]
        else:
            v = _vec(jd["v"], 3, f"joint {idx} v")
            # A prismatic axis is a unit direction, not a length.
            if np.any(omega):
                v = v / 1000.0
        # Prismatic joints reuse the same keys in millimetres.
        to_canonical = (lambda x: np.deg2rad(x)) if np.any(omega) else (lambda x: x / 1000.0)
        lim = to_canonical(_vec(jd.get("limits_deg"), 2, f"joint {idx} limits_deg"))
        speed = jd.get("max_speed_deg_s")
        speed = None if speed is None else float(to_canonical(float(speed)))
        joints.append(JointSpec(np.concatenate([omega, v]), float(lim[0]), float(lim[1]), speed))

    home_doc = doc["home"]
    if not isinstance(home_doc, dict):
        raise ModelParseError("home must be an object")
    _reject_unknown(home_doc, _HOME_KEYS, "home")
    p = _vec(home_doc.get("translation_mm"), 3, "home translation_mm") / 1000.0
    rot = home_doc.get("rotation", "identity")
    if rot == "identity":
        R = np.eye(3)
    else:
        if not isinstance(rot, list) or len(rot) != 3:
            raise ModelParseError("home rotation must be 'identity' or 3 rows")
        R = np.array([_vec(r, 3, "home rotation row") for r in rot])

    links_doc = doc.get("links_mm", {})
    if not isinstance(links_doc, dict):
        raise ModelParseError("links_mm must be an object")
    _reject_unknown(links_doc, set(LINK_KEYS), "links_mm")
    try:
        links = {k: float(links_doc[k]) / 1000.0 for k in LINK_KEYS if k in links_doc}
    except (TypeError, ValueError) as exc:
        raise ModelParseError("link lengths must be numeric") from exc

    name = doc["name"]
    if not isinstance(name, str):
        raise ModelParseError("name must be a string")
    model = RobotModel(name, joints, RigidTransform(R, p), links, str(doc.get("notes", "")))
    diags = validate_model(model, declared_dof=dof)
    if diags:
        raise ModelValidationError(diags)
    return model


def load_model(document: str) -> RobotModel:
    """Parse and validate a JSON model document."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"malformed JSON: {exc}") from exc
    return model_from_dict(doc)


def load_model_file(path) -> RobotModel:
    with open(path, encoding="utf-8") as fh:
        return load_model(fh.read())


def _preimage(target: float, guess: float, forward) -> float:
    """File value ``x`` near ``guess`` with forward(x) == target, bit for bit.

    Falls back to the closest candidate when no exact preimage exists.
    """
    if forward(guess) == target:
        return guess
    best, best_err = guess, abs(forward(guess) - target)
    lo = hi = guess
    for _ in range(64):
        lo = float(np.nextafter(lo, -np.inf))
        hi = float(np.nextafter(hi, np.inf))
        for cand in (lo, hi):
            got = forward(cand)
            if got == target:
                return cand
            if abs(got - target) < best_err:
                best, best_err = cand, abs(got - target)
    return best


def _mm(x: float) -> float:
    return _preimage(float(x), float(x) * 1000.0, lambda c: c / 1000.0)


def _deg(x: float) -> float:
    return _preimage(float(x), float(np.rad2deg(x)), lambda c: float(np.deg2rad(c)))


def _limits_out(j: JointSpec, revolute: bool) -> list[float]:
    conv = _deg if revolute else _mm
    return [conv(j.lower), conv(j.upper)]


def model_to_dict(model: RobotModel) -> dict:
    joints = []
    for j in model.joints:
        w, v = j.screw[:3], j.screw[3:]
        v_out = [_mm(c) for c in v] if np.any(w) else [float(c) for c in v]
        jd = {
            "omega": [float(c) for c in w],
            "v": v_out,
            "limits_deg": _limits_out(j, bool(np.any(w))),
        }
        if j.max_speed is not None:
            jd["max_speed_deg_s"] = _deg(j.max_speed) if np.any(w) else _mm(j.max_speed)
        joints.append(jd)
    doc = {
        "name": model.name,
        "dof": model.dof,
        "joints": joints,
        "home": {
            "translation_mm": [_mm(c) for c in model.home.p],
            "rotation": [[float(c) for c in row] for row in model.home.R],
        },
        "links_mm": {k: _mm(v) for k, v in model.links.items()},
    }
    if model.notes:
        doc["notes"] = model.notes
    return doc


def serialize_model(model: RobotModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def models_equal(a: RobotModel, b: RobotModel, tol: float = 0.0) -> bool:
    """Canonical-unit equality; ``tol=0`` demands bitwise-equal values."""
    if a.name != b.name or a.dof != b.dof or set(a.links) != set(b.links):
        return False

    def close(x, y):
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        return bool(np.all(np.abs(x - y) <= tol))

    for ja, jb in zip(a.joints, b.joints):
        if not (close(ja.screw, jb.screw) and close([ja.lower, ja.upper], [jb.lower, jb.upper])):
            return False
        if (ja.max_speed is None) != (jb.max_speed is None):
            return False
        if ja.max_speed is not None and not close(ja.max_speed, jb.max_speed):
            return False
    if not (close(a.home.R, b.home.R) and close(a.home.p, b.home.p)):
        return False
    return all(close(a.links[k], b.links[k]) for k in a.links)


def default_model_document() -> str:
    return resources.files("kinservo.data").joinpath("iiwa14.json").read_text(encoding="utf-8")


def default_iiwa14() -> RobotModel:
    """The 7-joint KUKA iiwa 14 model with home offset D = d_bc + d_cd + d_de + d_ef."""
    return load_model(default_model_document())


def resolve_model(ref) -> RobotModel:
    """Model from a path, or the built-in model for 'default' / 'iiwa14'."""
    if ref is None or str(ref).lower() in ("default", "iiwa14", "iiwa-14"):
        return default_iiwa14()
    return load_model_file(ref)

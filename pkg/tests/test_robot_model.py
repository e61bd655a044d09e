import copy
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinservo.liegroup import RigidTransform, screw_from_axis_point
from kinservo.robot_model import (
    JointSpec,
    ModelParseError,
    ModelValidationError,
    RobotModel,
    default_model_document,
    load_model,
    model_from_dict,
    models_equal,
    resolve_model,
    serialize_model,
    validate_model,
)


@pytest.fixture
def doc():
    return json.loads(default_model_document())


def test_default_model_shape(model):
    assert model.dof == 7
    assert model.name == "kuka-iiwa14"
    assert validate_model(model) == []


def test_home_offset_is_sum_of_link_lengths(model):
    # Link table (mm): 340, 740, 400, 126, 126.
    assert model.home.p[2] == pytest.approx(0.340 + 0.740 + 0.400 + 0.126 + 0.126, abs=1e-12)
    np.testing.assert_array_equal(model.home.R, np.eye(3))
    assert model.segment_sum == pytest.approx(1.732, abs=1e-12)


def test_first_screw_is_base_z_axis(model):
    np.testing.assert_array_equal(model.screws[0], [0, 0, 1, 0, 0, 0])


def test_screws_follow_alternating_axis_pattern(model):
    axes = model.screws[:, :3]
    for k in range(7):
        expected = [0, 0, 1] if k % 2 == 0 else [0, 1, 0]
        np.testing.assert_array_equal(axes[k], expected)
    # v = -omega x q for the axis points along the vertical column.
    points = [0, 0.34, 0.34, 1.08, 1.08, 1.48, 1.48]
    for k, z in enumerate(points):
        np.testing.assert_allclose(model.screws[k], screw_from_axis_point(axes[k], [0, 0, z]),
                                   atol=1e-15)


def test_limits_in_radians(model):
    assert model.lower[0] == pytest.approx(math.radians(-170))
    assert model.upper[1] == pytest.approx(math.radians(120))
    assert model.upper[6] == pytest.approx(math.radians(175))
    np.testing.assert_allclose(model.mid_config, np.zeros(7), atol=1e-15)


def test_swapped_limits_report_single_diagnostic(doc):
    doc["joints"][2]["limits_deg"] = [170, -170]
    with pytest.raises(ModelValidationError) as exc:
        model_from_dict(doc)
    assert exc.value.diagnostics == ["limit-order joint=3"]


def test_diagnostics_are_ordered_by_joint(doc):
    doc["joints"][4]["limits_deg"] = [10, -10]
    doc["joints"][1]["omega"] = [0, 0.9, 0]
    with pytest.raises(ModelValidationError) as exc:
        model_from_dict(doc)
    assert exc.value.diagnostics == ["screw-norm joint=2", "limit-order joint=5"]


def test_non_unit_screw_names_joint(doc):
    doc["joints"][1]["omega"] = [0, 0.9, 0]
    with pytest.raises(ModelValidationError, match="joint=2"):
        model_from_dict(doc)


def test_dof_mismatch_rejected(doc):
    doc["dof"] = 6
    with pytest.raises(ModelValidationError, match="dof-mismatch"):
        model_from_dict(doc)


def test_unknown_key_rejected(doc):
    doc["colour"] = "orange"
    with pytest.raises(ModelParseError, match="colour"):
        model_from_dict(doc)
    d2 = json.loads(default_model_document())
    d2["joints"][0]["damping"] = 1.0
    with pytest.raises(ModelParseError, match="joint 1"):
        model_from_dict(d2)


def test_malformed_json_rejected():
    with pytest.raises(ModelParseError):
        load_model("{not json")
    with pytest.raises(ModelParseError):
        load_model("[1, 2]")


def test_point_and_v_are_exclusive(doc):
    doc["joints"][0]["v"] = [0, 0, 0]
    with pytest.raises(ModelParseError, match="exactly one"):
        model_from_dict(doc)


def test_round_trip_is_bit_exact(model):
    again = load_model(serialize_model(model))
    assert models_equal(model, again, tol=0.0)
    assert serialize_model(again) == serialize_model(model)


def test_prismatic_joint_uses_millimetres(doc):
    doc["joints"].append({"omega": [0, 0, 0], "v": [0, 0, 1], "limits_deg": [0, 250]})
    doc["dof"] = 8
    m = model_from_dict(doc)
    np.testing.assert_array_equal(m.screws[7], [0, 0, 0, 0, 0, 1])
    assert (m.lower[7], m.upper[7]) == (0.0, 0.25)
    assert models_equal(m, load_model(serialize_model(m)))


def test_resolve_default_aliases(model):
    assert models_equal(resolve_model("default"), model)
    assert models_equal(resolve_model("iiwa14"), model)


def test_within_limits_and_clip(model):
    q = np.zeros(7)
    assert model.within_limits(q)
    q[1] = 3.0
    assert not model.within_limits(q)
    assert model.clip(q)[1] == pytest.approx(math.radians(120))


@st.composite
def random_models(draw):
    n = draw(st.integers(1, 8))
    joints = []
    for _ in range(n):
        w = np.array([draw(st.floats(-1, 1)) for _ in range(3)])
        if np.linalg.norm(w) < 1e-2:
            w = np.array([0.0, 0.0, 1.0])
        w /= np.linalg.norm(w)
        pt = np.array([draw(st.floats(-2, 2)) for _ in range(3)])
        lo = draw(st.floats(-3.0, 2.9))
        hi = draw(st.floats(lo + 1e-3, 3.1))
        joints.append(JointSpec(screw_from_axis_point(w, pt), lo, hi))
    home_z = draw(st.floats(0.1, 3.0))
    return RobotModel("random", joints, RigidTransform.from_translation([0, 0, home_z]), {})


@settings(max_examples=100, deadline=None)
@given(random_models())
def test_round_trip_property(m):
    # Millimetre values cannot hit every metre double exactly; 1e-12 is the contract.
    again = load_model(serialize_model(m))
    assert models_equal(m, again, tol=1e-12)


def test_mutating_copy_leaves_original(doc):
    original = model_from_dict(copy.deepcopy(doc))
    doc["joints"][0]["limits_deg"] = [-10, 10]
    changed = model_from_dict(doc)
    assert not models_equal(original, changed)

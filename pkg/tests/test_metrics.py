import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kinservo.metrics import (
    ZERO_JERK,
    MetricsError,
    ZeroLength,
    derivative_profiles,
    evaluate,
    max_axis_errors,
    per_axis_rmse,
    rmse_orientation,
    rmse_position,
    smoothness,
    trajectory_length,
)

# ---------------------------------------------------------------- loop oracles
# Plain Python arithmetic in the natural left-to-right order.


def oracle_length(points):
    total = 0.0
    for k in range(1, len(points)):
        dx = float(points[k][0]) - float(points[k - 1][0])
        dy = float(points[k][1]) - float(points[k - 1][1])
        dz = float(points[k][2]) - float(points[k - 1][2])
        total += math.sqrt(dx * dx + dy * dy + dz * dz)
    return total


def oracle_rmse_pos(a, d):
    s = 0.0
    for x, y in zip(a, d):
        ex, ey, ez = float(x[0]) - float(y[0]), float(x[1]) - float(y[1]), float(x[2]) - float(y[2])
        s += ex * ex + ey * ey + ez * ez
    return math.sqrt((1.0 / len(a)) * s)


def oracle_wrap(x):
    while x > math.pi:
        x -= 2.0 * math.pi
    while x <= -math.pi:
        x += 2.0 * math.pi
    return x


def oracle_rmse_orient(a, d):
    per = []
    for k in range(3):
        s = 0.0
        for x, y in zip(a, d):
            e = oracle_wrap(float(x[k]) - float(y[k]))
            s += e * e
        per.append(math.sqrt((1.0 / len(a)) * s))
    return per, math.sqrt((1.0 / 3.0) * (per[0] ** 2 + per[1] ** 2 + per[2] ** 2))


def oracle_profiles(q, dt):
    n = len(q[0])
    out = []
    for j in range(n):
        th = [float(row[j]) * (180.0 / math.pi) for row in q]
        ladder = []
        x = th
        for _ in range(4):
            x = [(x[k + 1] - x[k]) / dt for k in range(len(x) - 1)]
            ladder.append(x)
        v, a, jk, s = ladder
        vc = max((abs(v[k + 1] - v[k]) for k in range(len(v) - 1)), default=0.0)
        out.append((vc, max((abs(t) for t in a), default=0.0),
                    max((abs(t) for t in jk), default=0.0), max((abs(t) for t in s), default=0.0)))
    return out


# ---------------------------------------------------------------- length

def test_length_examples():
    assert trajectory_length([[1.0, 2.0, 3.0]]) == 0.0
    assert trajectory_length([[0, 0, 0], [1, 2, 2]]) == 3.0


def test_length_matches_oracle_bitwise():
    rng = np.random.default_rng(0)
    for _ in range(100):
        pts = rng.normal(size=(rng.integers(2, 300), 3))
        assert trajectory_length(pts) == oracle_length(pts)


# ---------------------------------------------------------------- smoothness

def test_straight_line_is_zero_jerk():
    t = np.linspace(0, 2, 41)
    assert smoothness(np.column_stack([t, 2 * t, -t]), t[1] - t[0]) == ZERO_JERK


def test_stationary_trace_has_zero_length():
    with pytest.raises(ZeroLength):
        smoothness(np.ones((10, 3)), 0.1)


def test_short_trace_rejected():
    with pytest.raises(MetricsError):
        smoothness(np.zeros((4, 3)), 0.1)


def test_quintic_matches_analytic_integral():
    # x = t^5 on [0, 1]: x''' = 60 t^2, integral of (60 t^2)^2 / 2 = 360, length 1.
    t = np.linspace(0.0, 1.0, 1001)
    s = smoothness(np.column_stack([t ** 5, 0 * t, 0 * t]), t[1] - t[0])
    assert s == pytest.approx(1.0 / math.sqrt(360.0), rel=0.01)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 100.0))
def test_smoothness_is_scale_invariant(scale):
    t = np.linspace(0, 1, 201)
    p = np.column_stack([np.sin(3 * t), t ** 3, np.cos(t)])
    base = smoothness(p, t[1] - t[0])
    assert smoothness(scale * p, t[1] - t[0]) == pytest.approx(base, rel=1e-9)


# ---------------------------------------------------------------- rmse

def test_rmse_position_examples():
    a = np.random.default_rng(1).normal(size=(10, 3))
    assert rmse_position(a, a) == 0.0
    assert rmse_position([[0.001, 0, 0]], [[0, 0, 0]]) == 0.001
    with pytest.raises(MetricsError):
        rmse_position(a, a[:5])


def test_rmse_matches_oracles_bitwise():
    rng = np.random.default_rng(2)
    for _ in range(100):
        n = int(rng.integers(1, 200))
        a, d = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
        assert rmse_position(a, d) == oracle_rmse_pos(a, d)
        ea = rng.uniform(-math.pi, math.pi, (n, 3))
        ed = rng.uniform(-math.pi, math.pi, (n, 3))
        per, comb = rmse_orientation(ea, ed)
        oper, ocomb = oracle_rmse_orient(ea, ed)
        assert list(per) == oper and comb == ocomb


@settings(max_examples=50, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_rmse_position_translation_invariant(x, y, z):
    rng = np.random.default_rng(3)
    a, d = rng.normal(size=(20, 3)), rng.normal(size=(20, 3))
    s = np.array([x, y, z])
    assert rmse_position(a + s, d + s) == pytest.approx(rmse_position(a, d), rel=1e-9, abs=1e-12)


def test_rmse_orientation_examples():
    a = np.zeros((5, 3))
    per, comb = rmse_orientation(a, a)
    assert comb == 0.0 and not np.any(per)
    roll = a.copy()
    roll[:, 0] = math.radians(2.0)
    _, comb = rmse_orientation(roll, a)
    assert math.degrees(comb) == pytest.approx(2.0 / math.sqrt(3.0), rel=1e-12)
    per, _ = rmse_orientation([[math.radians(179), 0, 0]], [[math.radians(-179), 0, 0]])
    assert math.degrees(per[0]) == pytest.approx(2.0, rel=1e-9)


def test_rmse_orientation_wrap_invariance():
    rng = np.random.default_rng(4)
    a, d = rng.uniform(-3, 3, (30, 3)), rng.uniform(-3, 3, (30, 3))
    shifted = a.copy()
    shifted[::3] += 2 * math.pi
    np.testing.assert_allclose(rmse_orientation(shifted, d)[0], rmse_orientation(a, d)[0],
                               rtol=1e-12)


# ---------------------------------------------------------------- maxima

def test_max_axis_errors_examples():
    a = np.zeros((3, 6))
    assert not np.any(max_axis_errors(a, a))
    d = a.copy()
    d[1] = [0.001, -0.002, 0.0005, math.radians(1), 0, math.radians(-3)]
    np.testing.assert_allclose(max_axis_errors(a, d), [1, 2, 0.5, 1, 0, 3], atol=1e-12)


def test_max_axis_errors_matches_scan():
    rng = np.random.default_rng(5)
    a, d = rng.normal(size=(40, 6)), rng.normal(size=(40, 6))
    got = max_axis_errors(a, d)
    for k in range(6):
        if k < 3:
            scan = max(abs(x[k] - y[k]) for x, y in zip(a, d)) * 1000.0
        else:
            scan = math.degrees(max(abs(oracle_wrap(x[k] - y[k])) for x, y in zip(a, d)))
        assert got[k] == pytest.approx(scan, rel=1e-12)


def test_per_axis_rmse_units():
    a = np.zeros((4, 6))
    d = a.copy()
    d[:, 0] = 0.002
    d[:, 5] = math.radians(1.0)
    np.testing.assert_allclose(per_axis_rmse(a, d), [2, 0, 0, 0, 0, 1], atol=1e-12)


# ---------------------------------------------------------------- profiles

def test_profiles_constant_is_zero():
    p = derivative_profiles(np.ones((10, 3)), 0.1)
    for arr in (p.vc, p.ap, p.jerk, p.snap):
        assert not np.any(arr)
    assert not p.short_trace


def test_profiles_hand_example():
    q = np.radians([[0.0], [1.0], [3.0], [6.0]])
    p = derivative_profiles(q, 1.0)
    assert p.vc[0] == pytest.approx(1.0, rel=1e-12)
    assert p.ap[0] == pytest.approx(1.0, rel=1e-12)
    assert p.jerk[0] == pytest.approx(0.0, abs=1e-12)
    assert p.snap[0] == 0.0 and p.short_trace


def test_profiles_need_two_ticks():
    with pytest.raises(MetricsError):
        derivative_profiles(np.zeros((1, 7)), 0.1)


def test_profiles_match_oracle_bitwise():
    rng = np.random.default_rng(6)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        dt = float(rng.uniform(0.01, 0.2))
        q = np.cumsum(rng.normal(scale=0.02, size=(n, 7)), axis=0)
        p = derivative_profiles(q, dt)
        oracle = oracle_profiles(q, dt)
        for j in range(7):
            assert (p.vc[j], p.ap[j], p.jerk[j], p.snap[j]) == oracle[j]


def test_profiles_time_reversal_invariant():
    rng = np.random.default_rng(7)
    q = np.cumsum(rng.normal(scale=0.02, size=(50, 7)), axis=0)
    a, b = derivative_profiles(q, 0.05), derivative_profiles(q[::-1], 0.05)
    for x, y in ((a.vc, b.vc), (a.ap, b.ap), (a.jerk, b.jerk), (a.snap, b.snap)):
        np.testing.assert_allclose(x, y, rtol=1e-9)


# ---------------------------------------------------------------- report

def test_evaluate_builds_full_report():
    t = np.linspace(0, 2, 27)
    actual = np.column_stack([0.1 * t, np.sin(t) * 0.05, 0 * t + 0.5, 0 * t, 0 * t, 0.1 * t])
    desired = actual + [0.001, 0, 0, 0, 0, 0]
    q = np.column_stack([np.sin(t + k) * 0.1 for k in range(7)])
    rep = evaluate(actual, desired, q, t[1] - t[0])
    assert rep.rmse_pos == pytest.approx(0.001)
    assert rep.max_errors[0] == pytest.approx(1.0)
    assert len(rep.vc) == 7 and len(rep.joint_smoothness) == 7
    assert math.isfinite(rep.s_func) and rep.length > 0
    d = rep.to_dict()
    assert set(d) >= {"s_func", "length", "rmse_pos", "rmse_orient", "vc", "ap", "jerk", "snap"}


def test_evaluate_still_trace_reports_sentinel():
    a = np.zeros((10, 6))
    rep = evaluate(a, a, np.zeros((10, 7)), 0.1)
    assert rep.s_func == ZERO_JERK and rep.notes

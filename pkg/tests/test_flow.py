import io
import math

import numpy as np
import pytest

from cornermorse.critical import find_critical_points
from cornermorse.domain import Circle, Domain, Interval
from cornermorse.flow import (LevelBlocked, NonSmoothFlow, ZenoError, flow_jacobian,
                              flow_to_level, integrate, omega_limit, write_trace)
from cornermorse.problem import make_problem

SQ = Domain.product([Interval(0, 1), Interval(0, 1)])
CIRCLE = Domain.product([Circle(2 * math.pi)])


def test_square_piecewise_linear():
    pr = make_problem(SQ, "x1+x2")
    path = integrate(pr, (0.5, 0.3))
    assert path.terminal == "stationary"
    assert [e.kind for e in path.events] == ["capture", "capture"]
    e1, e2 = path.events
    assert e1.time == pytest.approx(0.3, abs=1e-9)
    np.testing.assert_allclose(e1.point, (0.2, 0.0), atol=1e-9)
    assert e1.to_stratum.depth == 1
    assert e2.time == pytest.approx(0.5, abs=1e-9)
    np.testing.assert_allclose(path.end, (0, 0), atol=1e-12)
    t, X = path.polyline()
    assert np.all(np.diff(t) >= 0)


def test_circle_to_pi():
    pr = make_problem(CIRCLE, "cos(x1)")
    path = integrate(pr, [math.pi / 2])
    assert path.terminal == "stationary"
    assert path.end[0] == pytest.approx(math.pi, abs=1e-6)
    _, X = path.polyline()
    assert np.all(np.diff(X[:, 0]) >= 0)


def test_stationary_start():
    pr = make_problem(SQ, "x1+x2")
    path = integrate(pr, (0, 0))
    assert path.terminal == "stationary" and path.t_end == 0
    assert len(path.segments) == 1 and not path.events


def test_release_event():
    # on the bottom edge -grad f = (1, x1 - 0.5) turns inward at x1 = 0.5
    pr = make_problem(SQ, "-x1 - x2*(x1-0.5)")
    path = integrate(pr, (0.1, 0.0), t_max=5)
    kinds = [e.kind for e in path.events]
    assert "release" in kinds
    rel = path.events[kinds.index("release")]
    assert rel.point[0] == pytest.approx(0.5, abs=1e-6)
    assert rel.to_stratum.depth == 0


def test_flow_to_level_examples():
    pr = make_problem(SQ, "x1+x2")
    np.testing.assert_allclose(flow_to_level(pr, (0.5, 0.3), 0.5), (0.35, 0.15), atol=1e-9)
    np.testing.assert_array_equal(flow_to_level(pr, (0.5, 0.3), 0.8), (0.5, 0.3))
    pr = make_problem(CIRCLE, "cos(x1)")
    q = flow_to_level(pr, [math.pi / 2], -0.5)
    assert q[0] == pytest.approx(2 * math.pi / 3, abs=1e-7)
    assert pr.value(q) == pytest.approx(-0.5, abs=1e-8)


def test_flow_to_level_blocked():
    pr = make_problem(SQ, "x1+x2")
    cps = find_critical_points(pr).points
    with pytest.raises(LevelBlocked) as info:
        flow_to_level(pr, (0.5, 0.3), -1.0, cps)
    assert info.value.critical_id == 0


def test_jacobian_translation_is_identity():
    pr = make_problem(SQ, "-x1-0.5*x2")
    J = flow_jacobian(pr, (0.2, 0.2), 0.3)
    np.testing.assert_allclose(J, np.eye(2), atol=1e-6)


def test_jacobian_exponential():
    pr = make_problem(Domain.product([Interval(0, 2)]), "x1^2/2")
    for T in (0.5, 1.0, 2.0):
        J = flow_jacobian(pr, [1.5], T)
        assert J[0, 0] == pytest.approx(math.exp(-T), rel=1e-6)


def test_jacobian_across_capture_halving():
    # -grad f = (-1, -x1): the path hits y=0 then slides left along it
    pr = make_problem(SQ, "x1 + x1*x2 + x2")
    p = np.array([0.6, 0.3])
    ref = integrate(pr, p, t_max=0.4)
    assert [e.kind for e in ref.events] == ["capture"]
    h = 1e-5
    J1 = flow_jacobian(pr, p, 0.4, h=h)
    J2 = flow_jacobian(pr, p, 0.4, h=h / 2)
    np.testing.assert_allclose(J1, J2, rtol=1e-4, atol=1e-4 * np.abs(J1).max())
    # after capture only the edge coordinate survives
    assert np.all(np.abs(J1[1]) < 1e-6)


def test_jacobian_refuses_corner_hit():
    pr = make_problem(SQ, "x1+x2")
    with pytest.raises(NonSmoothFlow):
        flow_jacobian(pr, (0.3, 0.3), 0.5)


def test_semigroup():
    pr = make_problem(SQ, "sin(2*x1) + x2^2 - x1*x2")
    for p in pr.sample_points(10, salt=11):
        whole = integrate(pr, p, t_max=1.7).end
        mid = integrate(pr, p, t_max=0.6).end
        np.testing.assert_allclose(integrate(pr, mid, t_max=1.1).end, whole, atol=1e-7)


def test_monotone_along_paths():
    pr = make_problem(SQ, "sin(3*x1)*cos(2*x2) + 0.3*x1")
    for p in pr.sample_points(20, salt=2):
        _, X = integrate(pr, p).polyline()
        f = [pr.value(x) for x in X]
        assert np.all(np.diff(f) <= 1e-9)


def test_omega_limit_examples():
    pr = make_problem(SQ, "x1+x2")
    cps = find_critical_points(pr).points
    assert omega_limit(pr, (0.5, 0.3), cps).critical_id == 0
    assert omega_limit(pr, (0.0, 0.0), cps).critical_id == 0
    cyl = Domain.product([Circle(2 * math.pi), Interval(0, 1)])
    pr = make_problem(cyl, "cos(x1)-x2")
    cps = find_critical_points(pr).points
    res = omega_limit(pr, (math.pi / 2, 0.5), cps)
    target = next(cp for cp in cps if cp.id == res.critical_id)
    np.testing.assert_allclose(target.location, (math.pi, 1), atol=1e-9)
    assert target.index == 0


def test_zeno_guard():
    pr = make_problem(SQ, "x1+x2")
    with pytest.raises(ZenoError):
        integrate(pr, (0.5, 0.3), max_events=0)


def test_trace_csv():
    pr = make_problem(SQ, "x1+x2")
    text = write_trace(pr, [integrate(pr, (0.5, 0.3))])
    rows = text.strip().split("\n")
    assert rows[0] == "trajectory_id,t,x1,x2,stratum_depth,event"
    events = [r.split(",")[-1] for r in rows[1:]]
    assert events.count("capture") == 2 and events[-1] == "stationary"
    buf = io.StringIO()
    write_trace(pr, [integrate(pr, (0.5, 0.3))], buf)
    assert buf.getvalue() == text

import math

import numpy as np
import pytest

from cornermorse.critical import find_critical_points
from cornermorse.domain import Circle, Domain, Interval
from cornermorse.field import Metric, MorseViolation, gradient, modified_gradient, validate_morse
from cornermorse.problem import make_problem

SQ = Domain.product([Interval(0, 1), Interval(0, 1)])


def test_gradient_examples():
    pr = make_problem(Domain.product([Circle(2 * math.pi), Interval(0, 1)]), "cos(x1)-x2")
    np.testing.assert_allclose(gradient(pr, (0, 0.5)), (0, -1), atol=1e-15)
    pr = make_problem(Domain.product([Interval(0, 1)] * 3), "x1", [[2, 0, 0], [0, 2, 0], [0, 0, 2]])
    np.testing.assert_allclose(gradient(pr, (0.3, 0.1, 0.9)), (0.5, 0, 0))


def test_gradient_matches_fd_with_metric():
    g = np.array([[2.0, 0.3], [0.3, 1.0]])
    pr = make_problem(SQ, "sin(x1*x2) + x1^2", g)
    p = np.array([0.3, 0.7])
    h = 1e-6
    d = np.array([(pr.value(p + h * e) - pr.value(p - h * e)) / (2 * h) for e in np.eye(2)])
    np.testing.assert_allclose(gradient(pr, p), np.linalg.solve(g, d), rtol=1e-6)


def test_metric_rejects_non_spd():
    with pytest.raises(ValueError):
        Metric.constant([[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        Metric.constant([[1, 0.1], [0, 1]])


def test_interior_is_minus_gradient():
    mg = modified_gradient(make_problem(SQ, "-x1-x2"), (0.4, 0.6))
    np.testing.assert_allclose(mg.vector, (1, 1))
    assert mg.stratum.depth == 0 and not mg.stationary


def test_edge_drops_outward_normal():
    mg = modified_gradient(make_problem(SQ, "x1+2*x2"), (0, 0.5))
    np.testing.assert_allclose(mg.vector, (0, -2))
    assert mg.stratum.depth == 1


def test_corner_stationary():
    mg = modified_gradient(make_problem(SQ, "x1+2*x2"), (0, 0))
    np.testing.assert_allclose(mg.vector, (0, 0))
    assert mg.stratum.depth == 2 and mg.stationary


def test_corner_slides_along_edge():
    mg = modified_gradient(make_problem(SQ, "x1-2*x2"), (0, 0))
    np.testing.assert_allclose(mg.vector, (0, 2))
    assert mg.stratum.depth == 1 and not mg.stationary


def test_ambiguous_corner_raises():
    # at the acute simplex vertex (0,1) both edge projections point inward
    d = Domain.polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    pr = make_problem(d, "0.7*x2 - x1 + 0.2")
    with pytest.raises(MorseViolation):
        modified_gradient(pr, (0, 1))


def test_projection_identity_and_inward(rng=np.random.default_rng(5)):
    g = np.array([[1.0, 0.4], [0.4, 2.0]])
    pr = make_problem(SQ, "sin(3*x1)*cos(2*x2) + x1*x2", g)
    dom = pr.domain
    for p in pr.sample_points(200, salt=3):
        # push some samples onto the boundary
        if rng.random() < 0.5:
            p[rng.integers(0, 2)] = rng.choice([0.0, 1.0])
        mg = modified_gradient(pr, p)
        gf = gradient(pr, p)
        lhs = mg.vector @ g @ gf
        rhs = -(mg.vector @ g @ mg.vector)
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-14)
        assert dom.is_inward(p, mg.vector)


def test_validate_square_x2_fails():
    pr = make_problem(SQ, "x2")
    rep = validate_morse(pr, find_critical_points(pr, strict=False).points)
    assert not rep.passed
    assert "1" in rep.conditions_failed()
    loc = [e.location for e in rep.failures if e.condition == "1"]
    assert all(abs(y) < 1e-12 for _, y in loc)


def test_validate_square_linear_passes():
    pr = make_problem(SQ, "x1+x2")
    rep = validate_morse(pr, find_critical_points(pr).points)
    assert rep.passed, rep.to_json()


def test_validate_interval_cubic_flags_boundary():
    pr = make_problem(Domain.product([Interval(0, 1)]), "x1^3")
    rep = validate_morse(pr, find_critical_points(pr, strict=False).points)
    assert not rep.passed
    assert any(e.location == [0.0] for e in rep.failures)


def test_validate_torus_degenerate_circle():
    T = Domain.product([Circle(2 * math.pi), Circle(2 * math.pi)])
    pr = make_problem(T, "cos(x1)")
    rep = validate_morse(pr, find_critical_points(pr, strict=False).points)
    assert not rep.passed and "1" in rep.conditions_failed()


def test_stationary_equals_essential():
    for f in ("x1+x2", "-(x1-0.5)^2-(x2-0.45)^2", "x1-2*x2"):
        pr = make_problem(SQ, f)
        cps = find_critical_points(pr).points
        for cp in cps:
            assert modified_gradient(pr, cp.location).stationary == cp.essential
        # and nothing else on a grid is stationary
        ess = [cp.location for cp in cps if cp.essential]
        for x in np.linspace(0, 1, 9):
            for y in np.linspace(0, 1, 9):
                p = np.array([x, y])
                if modified_gradient(pr, p).stationary:
                    assert min(np.linalg.norm(p - q) for q in ess) < 1e-9


def test_validation_report_json():
    pr = make_problem(SQ, "x2")
    rep = validate_morse(pr, find_critical_points(pr, strict=False).points)
    for entry in rep.to_json():
        assert set(entry) == {"condition", "location", "stratum", "detail"}

import math

import numpy as np
import pytest
from scipy.linalg import ldl

from cornermorse.critical import classify, find_critical_points, unstable_seeds
from cornermorse.domain import Circle, Domain, Interval, StratumId, locate
from cornermorse.field import MorseViolation
from cornermorse.problem import make_problem

TWO_PI = 2 * math.pi


def ess(cps):
    return [cp for cp in cps if cp.essential]


def test_interval_quadratic():
    pr = make_problem(Domain.product([Interval(0, 1)]), "-(x1-0.4)^2")
    e = {round(float(cp.location[0]), 9): cp.index for cp in ess(find_critical_points(pr).points)}
    assert e == {0.4: 1, 0.0: 0, 1.0: 0}


def test_square_linear_single_essential():
    pr = make_problem(Domain.product([Interval(0, 1)] * 2), "x1+x2")
    cps = find_critical_points(pr).points
    assert len(cps) == 4  # the vertices
    [e] = ess(cps)
    np.testing.assert_array_equal(e.location, (0, 0))
    assert e.index == 0


def test_torus_four_points():
    T = Domain.product([Circle(TWO_PI), Circle(TWO_PI)])
    pr = make_problem(T, "cos(x1)+cos(x2)")
    got = sorted((tuple(np.round(cp.location, 8)), cp.index) for cp in ess(find_critical_points(pr).points))
    pi = round(math.pi, 8)
    assert got == sorted([((0.0, 0.0), 2), ((0.0, pi), 1), ((pi, 0.0), 1), ((pi, pi), 0)])


def test_normal_form_saddle():
    pr = make_problem(Domain.product([Interval(-1, 1)] * 2), "3 - x1^2 + x2^2")
    cp = classify(pr, (0, 0), StratumId((), 2))
    assert cp.index == 1 and cp.essential
    np.testing.assert_allclose(cp.E_minus[:, 0], (1, 0))


def test_interior_min():
    pr = make_problem(Domain.product([Interval(-1, 1)] * 2), "x1^2+x2^2")
    cp = classify(pr, (0, 0), StratumId((), 2))
    assert cp.index == 0 and cp.E_minus.shape == (2, 0)


def test_cylinder_boundary_circle_restriction():
    cyl = Domain.product([Circle(TWO_PI), Interval(0, 1)])
    pr = make_problem(cyl, "cos(x1)-x2")
    p = (0.0, 1.0)
    cp = classify(pr, p, locate(cyl, p))
    np.testing.assert_allclose(cp.hessK, [[-1.0]])
    assert cp.index == 1 and cp.essential


def test_degenerate_stationary_raises():
    T = Domain.product([Circle(TWO_PI), Circle(TWO_PI)])
    pr = make_problem(T, "cos(x1)")
    with pytest.raises(MorseViolation):
        classify(pr, (0, 1.0), StratumId((), 2))


def test_orientation_convention_and_inertia():
    g = np.array([[1.5, 0.2, 0.0], [0.2, 1.0, 0.3], [0.0, 0.3, 2.0]])
    cube = Domain.product([Interval(0, 1)] * 3)
    pr = make_problem(cube, "-(x1-0.5)^2 + (x2-0.45)^2 - (x3-0.52)^2 + 0.1*x1*x3", g)
    for cp in find_critical_points(pr, density=4).points:
        frame = np.hstack([cp.E_minus, cp.E_plus])
        assert np.linalg.det(frame) > 0
        np.testing.assert_allclose(frame.T @ g @ frame, np.eye(3), atol=1e-10)
        if cp.hessK.size:
            _, D, _ = ldl(cp.hessK)
            assert cp.index == int(np.sum(np.linalg.eigvalsh(D) < 0))
        assert cp.index <= cp.stratum.dim


def test_seeds_interval():
    pr = make_problem(Domain.product([Interval(0, 1)]), "-(x1-0.4)^2")
    cp = next(c for c in find_critical_points(pr).points if c.index == 1)
    pts = [s.point[0] for s in unstable_seeds(pr, cp, 0.01)]
    assert pts == pytest.approx([0.39, 0.41], abs=1e-15)


def test_seeds_circle_of_eight():
    pr = make_problem(Domain.product([Interval(-1, 1)] * 2), "-x1^2-x2^2")
    cp = classify(pr, (0, 0), StratumId((), 2))
    seeds = unstable_seeds(pr, cp, 0.01, 8)
    assert len(seeds) == 8
    for k, s in enumerate(seeds):
        assert s.angle == pytest.approx(2 * math.pi * k / 8)
        assert np.linalg.norm(s.point) == pytest.approx(0.01)


def test_seeds_index_zero_empty():
    pr = make_problem(Domain.product([Interval(-1, 1)] * 2), "x1^2+x2^2")
    assert unstable_seeds(pr, classify(pr, (0, 0), StratumId((), 2)), 0.01) == []


def test_seed_radius_shrinks_at_boundary():
    pr = make_problem(Domain.product([Interval(0, 1)]), "-(x1-0.001)^2")
    cp = next(c for c in find_critical_points(pr).points if c.index == 1)
    for s in unstable_seeds(pr, cp, 0.01):
        assert 0 <= s.point[0] <= 1


def test_seed_radius_robust_omega():
    from cornermorse.flow import omega_limit
    pr = make_problem(Domain.product([Interval(0, 1)] * 2), "-(x1-0.5)^2-(x2-0.45)^2")
    cps = find_critical_points(pr).points
    top = next(c for c in cps if c.index == 2)
    for a, b in zip(unstable_seeds(pr, top, top.epsilon, 16), unstable_seeds(pr, top, top.epsilon / 2, 16)):
        assert omega_limit(pr, a.point, cps).critical_id == omega_limit(pr, b.point, cps).critical_id


def test_sorted_and_deduplicated():
    T = Domain.product([Circle(TWO_PI), Circle(TWO_PI)])
    pr = make_problem(T, "cos(x1)+cos(x2)")
    cps = find_critical_points(pr, density=16).points
    assert len(cps) == 4
    assert [cp.value for cp in cps] == sorted(cp.value for cp in cps)
    assert [cp.id for cp in cps] == list(range(4))


def test_simplex():
    d = Domain.polytope([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])
    pr = make_problem(d, "2*x2-x1")
    [e] = ess(find_critical_points(pr).points)
    np.testing.assert_allclose(e.location, (1, 0), atol=1e-12)

"""Geometry: exact values, oracle cross-checks, and MC validation."""
import math

import numpy as np
import pytest
from scipy.integrate import quad

from pvlab.geometry import ConvexBody, Window, box_hull, unit_ball_volume

# frozen expected values (closed forms evaluated independently below)
TRIANGLE = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
TRIANGLE_INRADIUS = 0.2928932188134524  # area / semiperimeter = (2 - sqrt(2))/2


def bodies_2d():
    return [
        ConvexBody.ball([0.0, 0.0], 1.0),
        ConvexBody.box([0.0, 0.0], [0.5, 0.5]),
        ConvexBody.ellipse([0.2, -0.1], [1.3, 0.6]),
        ConvexBody.polygon(TRIANGLE),
    ]


def test_unit_ball_volume():
    assert unit_ball_volume(1) == pytest.approx(2.0, rel=1e-15)
    assert unit_ball_volume(2) == pytest.approx(math.pi, rel=1e-15)
    assert unit_ball_volume(3) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-15)
    assert unit_ball_volume(0) == 1.0


def test_unit_square_intrinsic_volumes():
    sq = ConvexBody.box([0.5, 0.5], [0.5, 0.5])
    assert sq.volume() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(sq.intrinsic_volumes(), [1.0, 2.0, 1.0], rtol=1e-14)


def test_unit_disk_intrinsic_volumes():
    disk = ConvexBody.ball([0.0, 0.0], 1.0)
    assert disk.volume() == pytest.approx(math.pi, rel=1e-15)
    np.testing.assert_allclose(disk.intrinsic_volumes(), [1.0, math.pi, math.pi], rtol=1e-14)


def test_unit_ball_3d_intrinsic_volumes():
    ball = ConvexBody.ball([0.0, 0.0, 0.0], 1.0)
    iv = ball.intrinsic_volumes()
    assert iv[3] == pytest.approx(4.0 * math.pi / 3.0, rel=1e-14)
    assert iv[2] == pytest.approx(2.0 * math.pi, rel=1e-14)  # half surface area
    assert iv[0] == 1.0


def test_box_3d_intrinsic_volumes_are_symmetric_polynomials():
    box = ConvexBody.box([0.0, 0.0, 0.0], [0.5, 1.0, 1.5])
    # side lengths 1, 2, 3
    np.testing.assert_allclose(box.intrinsic_volumes(), [1.0, 6.0, 11.0, 6.0], rtol=1e-14)


def test_triangle_area_and_inradius():
    tri = ConvexBody.polygon(TRIANGLE)
    assert tri.volume() == pytest.approx(0.5, abs=1e-15)
    # oracle 1: r = area / semiperimeter for a triangle
    semi = (1.0 + 1.0 + math.sqrt(2.0)) / 2.0
    assert 0.5 / semi == pytest.approx(TRIANGLE_INRADIUS, rel=1e-15)
    assert tri.inradius() == pytest.approx(TRIANGLE_INRADIUS, rel=1e-9)
    # oracle 2: dense grid max of distance-to-boundary over interior points
    g = np.linspace(0.0, 1.0, 401)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts = pts[tri.contains(pts)]
    grid_best = tri.boundary_distance(pts).max()
    assert grid_best == pytest.approx(TRIANGLE_INRADIUS, abs=3e-3)


def test_ellipse_perimeter_against_quadrature():
    for a, b in [(1.0, 1.0), (1.3, 0.6), (2.0, 0.25), (0.4, 0.9)]:
        e = ConvexBody.ellipse([0.0, 0.0], [a, b])
        arc = quad(lambda t: math.hypot(a * math.sin(t), b * math.cos(t)),
                   0.0, 2.0 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        assert e.perimeter() == pytest.approx(arc, rel=1e-12)
        assert e.intrinsic_volumes()[1] == pytest.approx(arc / 2.0, rel=1e-12)
    circle = ConvexBody.ellipse([0.0, 0.0], [0.7, 0.7])
    assert circle.perimeter() == pytest.approx(2.0 * math.pi * 0.7, rel=1e-14)


def test_mc_volume_every_kind():
    rng = np.random.default_rng(1905)
    n = 1_000_000
    for body in bodies_2d() + [ConvexBody.ball([0.0, 0.0, 0.0], 0.8),
                               ConvexBody.box([0.1, 0.0, -0.2], [0.6, 0.4, 0.9])]:
        w = body.dilated_window(0.1)
        pts = rng.uniform(w.lo, w.hi, size=(n, body.dim))
        p = body.contains(pts).mean()
        est = w.volume() * p
        se = w.volume() * math.sqrt(p * (1.0 - p) / n)
        assert abs(est - body.volume()) < 4.0 * se, body.kind


def test_steiner_mc_2d():
    # MC volume of the parallel body K + B(0, r) vs the Steiner polynomial
    rng = np.random.default_rng(77)
    n = 400_000
    for body in [ConvexBody.polygon(TRIANGLE), ConvexBody.ellipse([0.0, 0.0], [1.2, 0.5])]:
        for r in (0.1, 0.5):
            w = body.dilated_window(r)
            pts = rng.uniform(w.lo, w.hi, size=(n, 2))
            inside = body.contains(pts) | (body.boundary_distance(pts) <= r)
            p = inside.mean()
            est = w.volume() * p
            se = w.volume() * math.sqrt(p * (1.0 - p) / n)
            assert abs(est - body.dilated_volume(r)) < 4.0 * se, (body.kind, r)


def test_steiner_coefficients_2d():
    # Vol(K + B_r) = V2 + 2 V1 r + pi r^2 exactly for polygons
    tri = ConvexBody.polygon(TRIANGLE)
    v0, v1, v2 = tri.intrinsic_volumes()
    assert v0 == 1.0
    r = 0.37
    expect = v2 + 2.0 * v1 * r + math.pi * r * r
    assert tri.dilated_volume(r) == pytest.approx(expect, rel=1e-14)


def test_ellipse_boundary_distance_against_polyline():
    # oracle: min distance to a dense sample of boundary points; that bounds
    # the true distance from below exactly and from above by half a chord
    a, b = 1.3, 0.6
    n = 1 << 17
    e = ConvexBody.ellipse([0.0, 0.0], [a, b])
    t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    ring = np.column_stack([a * np.cos(t), b * np.sin(t)])
    half_chord = 0.5 * a * 2.0 * math.pi / n
    rng = np.random.default_rng(5)
    pts = rng.uniform([-2.0, -2.0], [2.0, 2.0], size=(400, 2))
    d = e.boundary_distance(pts)
    for p, di in zip(pts, d):
        oracle = np.sqrt(np.min(np.sum((ring - p) ** 2, axis=1)))
        assert di <= oracle + 1e-9
        assert di * di + half_chord * half_chord + 1e-12 >= (oracle - 1e-9) ** 2
    # axis and center special cases
    assert e.boundary_distance(np.array([0.0, 0.0])) == pytest.approx(b, rel=1e-12)
    assert e.boundary_distance(np.array([a + 0.5, 0.0])) == pytest.approx(0.5, rel=1e-12)
    assert e.boundary_distance(np.array([0.0, -b - 0.25])) == pytest.approx(0.25, rel=1e-12)


def test_membership_distance_consistency():
    # along a segment from an inside to an outside point, the membership flip
    # happens where the boundary distance vanishes
    rng = np.random.default_rng(42)
    for body in bodies_2d():
        w = body.dilated_window(1.0)
        for _ in range(25):
            p_in = body.center.copy()
            p_out = rng.uniform(w.lo, w.hi)
            while body.contains(p_out):
                p_out = rng.uniform(w.lo, w.hi)
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if body.contains(p_in + mid * (p_out - p_in)):
                    lo = mid
                else:
                    hi = mid
            crossing = p_in + 0.5 * (lo + hi) * (p_out - p_in)
            assert body.boundary_distance(crossing) < 1e-9


def test_boundary_distance_is_lipschitz():
    rng = np.random.default_rng(9)
    for body in bodies_2d():
        w = body.dilated_window(0.8)
        x = rng.uniform(w.lo, w.hi, size=(200, 2))
        y = rng.uniform(w.lo, w.hi, size=(200, 2))
        dx, dy = body.boundary_distance(x), body.boundary_distance(y)
        gap = np.sqrt(np.sum((x - y) ** 2, axis=1))
        assert np.all(np.abs(dx - dy) <= gap + 1e-12)


def test_contains_closed_set():
    disk = ConvexBody.ball([0.0, 0.0], 1.0)
    assert disk.contains(np.array([1.0, 0.0]))
    box = ConvexBody.box([0.0, 0.0], [0.5, 0.5])
    assert box.contains(np.array([0.5, -0.5]))
    tri = ConvexBody.polygon(TRIANGLE)
    assert tri.contains(np.array([0.0, 0.0]))
    assert tri.contains(np.array([0.5, 0.5]))  # on the hypotenuse
    assert not tri.contains(np.array([0.5 + 1e-12, 0.5 + 1e-12]))


def test_polygon_validation():
    with pytest.raises(ValueError, match="counterclockwise"):
        ConvexBody.polygon([(0, 0), (0, 1), (1, 0)])  # clockwise
    with pytest.raises(ValueError, match="convex"):
        ConvexBody.polygon([(0, 0), (1, 0), (2, 0), (0, 1)])  # collinear run
    with pytest.raises(ValueError, match="convex"):
        ConvexBody.polygon([(0, 0), (2, 0), (1, 0.5), (2, 2), (0, 2)])  # reflex
    with pytest.raises(ValueError, match="3 distinct"):
        ConvexBody.polygon([(0, 0), (1, 0), (1.0 + 1e-15, 1e-16), (0, 0)])
    # duplicate closing vertex is tolerated
    sq = ConvexBody.polygon([(0, 0), (1, 0), (1, 1), (0, 1), (0, 0)])
    assert sq.vertices.shape == (4, 2)


def test_body_validation():
    with pytest.raises(ValueError):
        ConvexBody.ball([0.0, 0.0], 0.0)
    with pytest.raises(ValueError):
        ConvexBody.ball([0.0], 1.0)  # dimension 1
    with pytest.raises(ValueError):
        ConvexBody.box([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        ConvexBody.ellipse([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])  # only 2-d


def test_window_basics():
    w = Window(np.array([0.0, -1.0]), np.array([2.0, 1.0]))
    assert w.volume() == pytest.approx(4.0)
    assert w.contains(np.array([0.0, 0.0]))
    assert not w.contains(np.array([2.1, 0.0]))
    with pytest.raises(ValueError):
        Window(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
    h = box_hull(w, Window(np.array([-1.0, 0.0]), np.array([1.0, 3.0])))
    np.testing.assert_allclose(h.lo, [-1.0, -1.0])
    np.testing.assert_allclose(h.hi, [2.0, 3.0])


def test_dilated_window_margins():
    disk = ConvexBody.ball([1.0, 2.0], 0.5)
    w = disk.dilated_window(0.25)
    np.testing.assert_allclose(w.lo, [0.25, 1.25])
    np.testing.assert_allclose(w.hi, [1.75, 2.75])
    with pytest.raises(ValueError):
        disk.dilated_window(-0.1)

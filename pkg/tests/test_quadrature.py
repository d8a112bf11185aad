"""Triangle quadrature: regular-rule exactness, transformed rules for touching
panel pairs checked against an independent analytic-potential route."""

import math

import numpy as np
import pytest

from helmbem.quadrature import (
    coincident_rule,
    edge_adjacent_rule,
    triangle_rule,
    vertex_adjacent_rule,
)

RULE_DEGREES = {1: 1, 3: 2, 5: 3, 6: 4}


def bary_monomial_integral(a, b, c):
    """Integral of L0^a L1^b L2^c over the unit reference triangle."""
    return (
        math.factorial(a)
        * math.factorial(b)
        * math.factorial(c)
        / math.factorial(a + b + c + 2)
    )


def test_regular_rules_basic_structure():
    for n in RULE_DEGREES:
        pts, wts = triangle_rule(n)
        assert pts.shape == (n, 3)
        assert wts.shape == (n,)
        assert np.all(wts > 0)
        assert wts.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.allclose(pts.sum(axis=1), 1.0, atol=1e-14)
        assert np.all(pts >= -1e-14)


def test_regular_rules_polynomial_exactness():
    area = 0.5
    for n, degree in RULE_DEGREES.items():
        pts, wts = triangle_rule(n)
        for total in range(degree + 1):
            for a in range(total + 1):
                for b in range(total - a + 1):
                    c = total - a - b
                    approx = area * np.sum(
                        wts * pts[:, 0] ** a * pts[:, 1] ** b * pts[:, 2] ** c
                    )
                    exact = bary_monomial_integral(a, b, c)
                    assert approx == pytest.approx(exact, abs=2e-15), (n, a, b, c)


def test_unavailable_rule_rejected():
    with pytest.raises(ValueError):
        triangle_rule(4)


# -- transformed rules for touching pairs ----------------------------------
#
# The reference for each case is the double integral of 1/|x-y| computed a
# second, independent way: the inner integral analytically (in-plane Newton
# potential of a polygon, per-edge arcsinh formula) and the outer one with a
# subdivided degree-4 rule.


def chart(p, corners):
    """Map chart coordinates {0 <= x2 <= x1 <= 1} to the plane."""
    c0, c1, c2 = corners
    return c0 + np.outer(p[:, 0], c1 - c0) + np.outer(p[:, 1], c2 - c1)


def tri_area(c):
    return 0.5 * abs(
        (c[1] - c[0])[0] * (c[2] - c[0])[1] - (c[1] - c[0])[1] * (c[2] - c[0])[0]
    )


def inverse_distance_potential(x, corners):
    """Integral of 1/|x-y| over a triangle, x in its plane."""
    cc = list(corners)
    det = (cc[1] - cc[0])[0] * (cc[2] - cc[0])[1] - (cc[1] - cc[0])[1] * (
        cc[2] - cc[0]
    )[0]
    if det < 0:
        cc = [cc[0], cc[2], cc[1]]
    cc.append(cc[0])
    total = 0.0
    for p, q in zip(cc[:-1], cc[1:]):
        t = q - p
        u = t / np.hypot(*t)
        n = np.array([u[1], -u[0]])
        dist = (p - x) @ n
        h = abs(dist)
        if h < 1e-14:
            continue
        s1 = (p - x) @ u
        s2 = (q - x) @ u
        total += dist * (np.arcsinh(s2 / h) - np.arcsinh(s1 / h))
    return total


def pair_integral_reference(cx, cy, levels=4):
    tris = [np.asarray(cx, dtype=float)]
    for _ in range(levels):
        refined = []
        for a, b, c in tris:
            ab, bc, ca = (a + b) / 2, (b + c) / 2, (c + a) / 2
            refined += [
                np.array([a, ab, ca]),
                np.array([ab, b, bc]),
                np.array([ca, bc, c]),
                np.array([ab, bc, ca]),
            ]
        tris = refined
    pts, wts = triangle_rule(6)
    total = 0.0
    for c in tris:
        xs = pts @ c
        total += tri_area(c) * sum(
            w * inverse_distance_potential(x, cy) for x, w in zip(xs, wts)
        )
    return total


def pair_integral_rule(rule, cx, cy):
    X = chart(rule.x, cx)
    Y = chart(rule.y, cy)
    r = np.linalg.norm(X - Y, axis=1)
    return (2 * tri_area(cx)) * (2 * tri_area(cy)) * np.sum(rule.w / r)


REFERENCE_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
# shares the edge (0,0)-(1,0), third vertex on the opposite side
EDGE_NEIGHBOUR = np.array([[0.0, 0.0], [1.0, 0.0], [0.3, -0.8]])
# shares only the vertex (0,0)
VERTEX_NEIGHBOUR = np.array([[0.0, 0.0], [-1.0, 0.2], [-0.4, -0.9]])


def test_singular_rule_structure():
    for factory in (coincident_rule, edge_adjacent_rule, vertex_adjacent_rule):
        for order in (2, 4):
            rule = factory(order)
            assert rule.x.shape == rule.y.shape == (len(rule.w), 2)
            for p in (rule.x, rule.y):
                assert np.all(p[:, 1] <= p[:, 0] + 1e-14)
                assert np.all(p >= -1e-14) and np.all(p <= 1 + 1e-14)
            assert np.all(rule.w > 0)
            # weights absorb all jacobians: sum equals chart-area squared
            assert rule.w.sum() == pytest.approx(0.25, abs=1e-12)


@pytest.mark.parametrize(
    "factory,cy,rtol",
    [
        (coincident_rule, REFERENCE_TRIANGLE, 1e-3),
        (edge_adjacent_rule, EDGE_NEIGHBOUR, 5e-4),
        (vertex_adjacent_rule, VERTEX_NEIGHBOUR, 1e-4),
    ],
    ids=["coincident", "edge", "vertex"],
)
def test_singular_rules_match_analytic_route(factory, cy, rtol):
    reference = pair_integral_reference(REFERENCE_TRIANGLE, cy)
    value = pair_integral_rule(factory(4), REFERENCE_TRIANGLE, cy)
    assert value == pytest.approx(reference, rel=rtol)


@pytest.mark.parametrize(
    "factory,cy",
    [
        (coincident_rule, REFERENCE_TRIANGLE),
        (edge_adjacent_rule, EDGE_NEIGHBOUR),
        (vertex_adjacent_rule, VERTEX_NEIGHBOUR),
    ],
    ids=["coincident", "edge", "vertex"],
)
def test_singular_rules_converge_with_order(factory, cy):
    vals = {
        order: pair_integral_rule(factory(order), REFERENCE_TRIANGLE, cy)
        for order in (2, 6, 8)
    }
    assert abs(vals[6] - vals[8]) < 0.05 * abs(vals[2] - vals[8])

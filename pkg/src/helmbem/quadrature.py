"""Quadrature rules for Galerkin boundary-element assembly.

Two ingredients:

* regular symmetric rules on the reference triangle, used for separated
  panel pairs (3-point far rule, 5-point near rule, 6-point verification
  rule);

* tensor-Gauss rules on [0,1]^4 pushed through the singularity-removing
  coordinate transforms for coincident, edge-adjacent and vertex-adjacent
  panel pairs (relative-coordinate technique with per-case subregion
  tables).

Regular rule points are barycentric (L0, L1, L2) with weights summing to
one, so that  integral over T f  ~  area(T) * sum_q w_q f(x_q).

The singular point sets live on the parameter domain
T^ = {0 <= x2 <= x1 <= 1} of the chart  x = v0 + x1 (v1 - v0) + x2 (v2 - v1);
their weights include all transform Jacobians and satisfy
sum w = area(T^)^2 = 1/4.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "triangle_rule",
    "SingularRule",
    "coincident_rule",
    "edge_adjacent_rule",
    "vertex_adjacent_rule",
]

_SQRT6 = 6.0 ** 0.5


def triangle_rule(npoints: int):
    """Symmetric rule on the reference triangle.

    Returns (points, weights): points barycentric (n, 3), weights (n,)
    summing to 1.

    Available rules:

    * 1  — centroid, degree 1
    * 3  — interior orbit a=1/6, degree 2 (the far-field rule)
    * 5  — centroid + mirror pair + edge pair, degree 3 (the near rule);
      coefficients are the closed-form solution of the degree-3 moment
      system (see below)
    * 6  — two 3-orbits, degree 4 (used for right-hand sides and
      quadrature-convergence checks)
    """
    if npoints == 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if npoints == 3:
        pts = np.array(
            [[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]
        )
        return pts, np.full(3, 1 / 3)
    if npoints == 5:
        # Mirror-symmetric degree-3 rule containing the centroid, derived by
        # solving the moment equations for {1, x, x^2, xy, x^3, x^2 y} on the
        # reference triangle.  All weights positive, all points inside or on
        # the boundary.  In (x, y) coordinates on the unit triangle:
        #   centroid (1/3, 1/3)            w = 45/76 - 9*sqrt(6)/76
        #   (p, q), (q, p)                 w = 35*sqrt(6)/912 + 55/456
        #     p = 1/5 + sqrt(6)/10 + sqrt(18 - 4*sqrt(6))/10
        #     q = 1/5 + sqrt(6)/10 - sqrt(18 - 4*sqrt(6))/10
        #   (r, 0), (0, r)                 w = sqrt(6)/48 + 1/12
        #     r = 4/5 - sqrt(6)/5
        # (weights here normalised to sum to 1).
        root = (18.0 - 4.0 * _SQRT6) ** 0.5 / 10.0
        p = 0.2 + _SQRT6 / 10.0 + root
        q = 0.2 + _SQRT6 / 10.0 - root
        r = 0.8 - _SQRT6 / 5.0
        w0 = 45.0 / 76.0 - 9.0 * _SQRT6 / 76.0
        w1 = 35.0 * _SQRT6 / 912.0 + 55.0 / 456.0
        w2 = _SQRT6 / 48.0 + 1.0 / 12.0
        xy = np.array([[1 / 3, 1 / 3], [p, q], [q, p], [r, 0.0], [0.0, r]])
        pts = np.column_stack([1.0 - xy.sum(axis=1), xy])
        return pts, np.array([w0, w1, w1, w2, w2])
    if npoints == 6:
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts = []
        wts = []
        for a, w in [(a1, w1), (a2, w2)]:
            pts += [[1 - 2 * a, a, a], [a, 1 - 2 * a, a], [a, a, 1 - 2 * a]]
            wts += [w, w, w]
        return np.array(pts), np.array(wts)
    raise ValueError(f"no {npoints}-point triangle rule available")


@dataclass(frozen=True)
class SingularRule:
    """4-D rule for a touching panel pair in chart coordinates.

    ``x`` and ``y`` are (n, 2) points in T^ for the test and trial panel
    charts; ``w`` are weights including all Jacobians.
    """

    x: np.ndarray
    y: np.ndarray
    w: np.ndarray


def _gauss01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor4(n: int):
    g, gw = _gauss01(n)
    xi, e1, e2, e3 = np.meshgrid(g, g, g, g, indexing="ij")
    w = np.einsum("i,j,k,l->ijkl", gw, gw, gw, gw)
    return (xi.ravel(), e1.ravel(), e2.ravel(), e3.ravel(), w.ravel())


@lru_cache(maxsize=None)
def coincident_rule(order: int = 4) -> SingularRule:
    """Same-panel rule: six subregions, Jacobian xi^3 eta1^2 eta2."""
    xi, e1, e2, e3, w0 = _tensor4(order)
    jac = xi ** 3 * e1 ** 2 * e2
    xs, ys, ws = [], [], []

    def region(x1, x2, y1, y2):
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([y1, y2]))
        ws.append(w0 * jac)

    one = np.ones_like(xi)
    # The six subregions of the relative-coordinate decomposition for the
    # common-face case; each pair below is a (x-hat, y-hat) chart pair.
    region(xi * one, xi * (1 - e1 + e1 * e2), xi * (1 - e1 * e2 * e3), xi * (1 - e1))
    region(xi * (1 - e1 * e2 * e3), xi * (1 - e1), xi * one, xi * (1 - e1 + e1 * e2))
    region(xi * one, xi * e1 * (1 - e2 + e2 * e3), xi * (1 - e1 * e2), xi * e1 * (1 - e2))
    region(xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi * one, xi * e1 * (1 - e2 + e2 * e3))
    region(xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi * one, xi * e1 * (1 - e2))
    region(xi * one, xi * e1 * (1 - e2), xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3))

    return SingularRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))


@lru_cache(maxsize=None)
def edge_adjacent_rule(order: int = 4) -> SingularRule:
    """Common-edge rule: five subregions.

    Both charts must list the shared edge first and in the same direction
    (chart vertices v0, v1 identical on the two panels).
    """
    xi, e1, e2, e3, w0 = _tensor4(order)
    xs, ys, ws = [], [], []

    def region(x1, x2, y1, y2, jac):
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([y1, y2]))
        ws.append(w0 * jac)

    one = np.ones_like(xi)
    j1 = xi ** 3 * e1 ** 2
    j2 = xi ** 3 * e1 ** 2 * e2
    region(xi * one, xi * e1 * e3, xi * (1 - e1 * e2), xi * e1 * (1 - e2), j1)
    region(xi * one, xi * e1, xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), j2)
    region(xi * (1 - e1 * e2), xi * e1 * (1 - e2), xi * one, xi * e1 * e2 * e3, j2)
    region(xi * (1 - e1 * e2 * e3), xi * e1 * e2 * (1 - e3), xi * one, xi * e1, j2)
    region(xi * (1 - e1 * e2 * e3), xi * e1 * (1 - e2 * e3), xi * one, xi * e1 * e2, j2)

    return SingularRule(np.concatenate(xs), np.concatenate(ys), np.concatenate(ws))


@lru_cache(maxsize=None)
def vertex_adjacent_rule(order: int = 4) -> SingularRule:
    """Common-vertex rule: two subregions, Jacobian xi^3 eta2.

    Both charts must place the shared vertex at chart vertex v0.
    """
    xi, e1, e2, e3, w0 = _tensor4(order)
    jac = xi ** 3 * e2
    one = np.ones_like(xi)
    x1 = np.concatenate([xi * one, xi * e2])
    x2 = np.concatenate([xi * e1, xi * e2 * e3])
    y1 = np.concatenate([xi * e2, xi * one])
    y2 = np.concatenate([xi * e2 * e3, xi * e1])
    w = np.concatenate([w0 * jac, w0 * jac])
    return SingularRule(
        np.column_stack([x1, x2]), np.column_stack([y1, y2]), w
    )

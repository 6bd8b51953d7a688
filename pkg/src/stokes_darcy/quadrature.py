"""Quadrature on the reference triangle and the reference edge."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

MAX_TABULATED_DEGREE = 6
MAX_TRIANGLE_DEGREE = 21
MAX_EDGE_DEGREE = 21


@dataclass(frozen=True)
class QuadratureRule:
    """Points in barycentric coordinates and weights summing to the reference measure.

    Triangle rules carry 3 barycentric coordinates per point and weights
    summing to 1/2.  Edge rules carry 2 coordinates (1 - s, s) and weights
    summing to 1.
    """

    kind: str
    degree: int
    points: np.ndarray
    weights: np.ndarray

    @property
    def reference_points(self):
        """Cartesian reference coordinates (xi, eta) for triangles, s for edges."""
        if self.kind == "triangle":
            return self.points[:, 1:]
        return self.points[:, 1]

    def __len__(self):
        return self.weights.size


def _orbit3(a):
    return [(a, a, 1 - 2 * a), (a, 1 - 2 * a, a), (1 - 2 * a, a, a)]


def _orbit6(a, b):
    c = 1 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


# Symmetric Gauss rules on triangles (weights as fractions of the area).
def _tri_table(degree):
    if degree <= 1:
        return [(1 / 3, 1 / 3, 1 / 3)], [1.0]
    if degree == 2:
        return _orbit3(1 / 6), [1 / 3] * 3
    if degree <= 4:
        pts = _orbit3(0.445948490915965) + _orbit3(0.091576213509771)
        w = [0.223381589678011] * 3 + [0.109951743655322] * 3
        return pts, w
    if degree == 5:
        pts = [(1 / 3, 1 / 3, 1 / 3)] + _orbit3(0.470142064105115) + _orbit3(0.101286507323456)
        w = [0.225] + [0.132394152788506] * 3 + [0.125939180544827] * 3
        return pts, w
    pts = (
        _orbit3(0.249286745170910)
        + _orbit3(0.063089014491502)
        + _orbit6(0.053145049844817, 0.310352451033784)
    )
    w = [0.116786275726379] * 3 + [0.050844906370207] * 3 + [0.082851075618374] * 6
    return pts, w


def _conical_product(degree):
    """Collapsed-coordinate rule: Gauss-Jacobi(1, 0) in eta, Gauss-Legendre along rays."""
    n = degree // 2 + 1
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    t, wt = 0.5 * (xj + 1.0), 0.25 * wj
    xl, wl = np.polynomial.legendre.leggauss(n)
    s, ws = 0.5 * (xl + 1.0), 0.5 * wl
    S, T = np.meshgrid(s, t, indexing="ij")
    xi, eta = (S * (1.0 - T)).ravel(), T.ravel()
    w = np.outer(ws, wt).ravel()
    pts = np.column_stack([1.0 - xi - eta, xi, eta])
    return QuadratureRule("triangle", degree, pts, w)


def make_quadrature(kind, degree):
    """Return a rule of the given kind exact for polynomials up to ``degree``."""
    degree = int(degree)
    if degree < 0:
        raise ValueError("quadrature degree must be non-negative")
    if kind == "triangle":
        if degree > MAX_TRIANGLE_DEGREE:
            raise ValueError(
                f"triangle rules are limited to degree {MAX_TRIANGLE_DEGREE}, got {degree}"
            )
        if degree > MAX_TABULATED_DEGREE:
            return _conical_product(degree)
        pts, w = _tri_table(degree)
        w = np.asarray(w)
        return QuadratureRule("triangle", degree, np.asarray(pts), 0.5 * w / w.sum())
    if kind == "edge":
        if degree > MAX_EDGE_DEGREE:
            raise ValueError(f"edge rules are limited to degree {MAX_EDGE_DEGREE}, got {degree}")
        n = degree // 2 + 1
        x, w = np.polynomial.legendre.leggauss(n)
        s = 0.5 * (x + 1.0)
        return QuadratureRule("edge", degree, np.column_stack([1 - s, s]), 0.5 * w)
    raise ValueError(f"unknown quadrature kind {kind!r}")

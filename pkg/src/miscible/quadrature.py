"""Quadrature rules on reference triangles and edges.

Triangle rules are stored in barycentric coordinates with weights normalized
to sum to one, so that ``integral over T = area(T) * sum(w_q * f(x_q))``.
Edge rules live on the unit interval with the same normalization.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["TriangleRule", "triangle_rule", "duffy_rule", "edge_rule"]


@dataclass(frozen=True)
class TriangleRule:
    """Quadrature rule on the triangle in barycentric form."""

    degree: int
    points: np.ndarray   # (n, 3) barycentric coordinates
    weights: np.ndarray  # (n,), sums to 1

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def n_points(self) -> int:
        return len(self.weights)

    def physical_points(self, triangle_vertices: np.ndarray) -> np.ndarray:
        """Map to physical coordinates; vertices (..., 3, 2) -> (..., n, 2)."""
        return np.einsum("qk,...kd->...qd", self.points, triangle_vertices)


def _centroid_rule() -> TriangleRule:
    return TriangleRule(1, np.full((1, 3), 1.0 / 3.0), np.array([1.0]))


def _three_point_rule() -> TriangleRule:
    # interior points at barycentric (2/3, 1/6, 1/6); degree 2
    pts = np.array([
        [2 / 3, 1 / 6, 1 / 6],
        [1 / 6, 2 / 3, 1 / 6],
        [1 / 6, 1 / 6, 2 / 3],
    ])
    return TriangleRule(2, pts, np.full(3, 1.0 / 3.0))


def _seven_point_rule() -> TriangleRule:
    # classic degree-5 rule: centroid plus two symmetric orbits
    s = np.sqrt(15.0)
    a1 = (6.0 - s) / 21.0
    a2 = (6.0 + s) / 21.0
    w1 = (155.0 - s) / 1200.0
    w2 = (155.0 + s) / 1200.0
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    wts = [9.0 / 40.0]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1.0 - 2.0 * a
        pts += [[b, a, a], [a, b, a], [a, a, b]]
        wts += [w, w, w]
    return TriangleRule(5, np.array(pts), np.array(wts))


@lru_cache(maxsize=None)
def duffy_rule(n: int) -> TriangleRule:
    """Collapsed tensor-product Gauss rule with n*n points.

    Built from the square via (x, y) = (a, b*(1-a)); exact for total degree
    up to 2n - 2.  Independent construction from the fixed-point rules, which
    makes it a useful cross-check oracle in tests (n=4 gives 16 points).
    """
    if n < 1:
        raise ValueError("duffy_rule needs n >= 1")
    ga, gwa = np.polynomial.legendre.leggauss(n)
    ga = 0.5 * (ga + 1.0)
    gwa = 0.5 * gwa
    aa, bb = np.meshgrid(ga, ga, indexing="ij")
    wa, wb = np.meshgrid(gwa, gwa, indexing="ij")
    x = aa.ravel()
    y = (bb * (1.0 - aa)).ravel()
    # reference-triangle area is 1/2; normalize weights to sum to 1
    w = (wa * wb * (1.0 - aa)).ravel() * 2.0
    bary = np.column_stack([1.0 - x - y, x, y])
    return TriangleRule(2 * n - 2, bary, w)


@lru_cache(maxsize=None)
def triangle_rule(degree: int = 5) -> TriangleRule:
    """Smallest stored rule exact for polynomials of the given total degree."""
    if degree < 1:
        raise ValueError("quadrature degree must be positive")
    if degree <= 1:
        return _centroid_rule()
    if degree <= 2:
        return _three_point_rule()
    if degree <= 5:
        return _seven_point_rule()
    # fall back to a collapsed rule of sufficient order
    n = (degree + 3) // 2
    return duffy_rule(n)


@lru_cache(maxsize=None)
def edge_rule(n_points: int = 3):
    """Gauss-Legendre rule on [0, 1]; returns (points, weights), weights sum to 1."""
    if n_points < 1:
        raise ValueError("edge rule needs at least one point")
    gx, gw = np.polynomial.legendre.leggauss(n_points)
    pts = 0.5 * (gx + 1.0)
    wts = 0.5 * gw
    pts.setflags(write=False)
    wts.setflags(write=False)
    return pts, wts

"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are collapsed (Duffy) products of Gauss-Jacobi and
Gauss-Legendre rules.  They are not symmetric, but they are exact to any
requested degree, which is what the assembly and error routines need.
Points are returned in barycentric coordinates so that they can be fed
directly to the basis evaluators.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 40


@dataclass(frozen=True)
class QuadratureRule:
    """Points and weights of a quadrature rule.

    For triangle rules ``points`` has shape ``(n, 3)`` (barycentric) and the
    weights sum to 1/2, the area of the reference triangle.  For edge rules
    ``points`` has shape ``(n,)`` with abscissae in [0, 1] and the weights
    sum to 1.
    """

    points: np.ndarray
    weights: np.ndarray
    exactness_degree: int

    def __len__(self) -> int:
        return len(self.weights)


def _check_degree(degree: int) -> None:
    if not 0 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")


@lru_cache(maxsize=None)
def edge_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``."""
    _check_degree(degree)
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    pts = 0.5 * (x + 1.0)
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> QuadratureRule:
    """Collapsed Gauss rule on the reference triangle (0,0), (1,0), (0,1)."""
    _check_degree(degree)
    n = degree // 2 + 1
    # weight (1 - x) absorbed by Gauss-Jacobi(alpha=1, beta=0)
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(n)
    xs = 0.5 * (xj + 1.0)
    wx = 0.25 * wj
    s = 0.5 * (xl + 1.0)
    ws = 0.5 * wl

    X = np.repeat(xs, n)
    S = np.tile(s, n)
    Y = S * (1.0 - X)
    W = np.repeat(wx, n) * np.tile(ws, n)

    bary = np.column_stack([1.0 - X - Y, X, Y])
    bary.setflags(write=False)
    W.setflags(write=False)
    return QuadratureRule(bary, W, degree)


def edge_points_to_bary(s: np.ndarray, i: int, j: int) -> np.ndarray:
    """Barycentric coordinates of points ``(1-s) p_i + s p_j`` on an edge."""
    bary = np.zeros((len(s), 3))
    bary[:, i] = 1.0 - s
    bary[:, j] = s
    return bary

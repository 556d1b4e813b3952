"""Error norms against exact solutions and experimental orders of convergence."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from ..quadrature import triangle_rule
from ..system import Solution


@lru_cache(maxsize=None)
def graded_rule(vertex: int, degree: int = 20, levels: int = 40):
    """Composite rule on the reference triangle, geometrically graded toward
    the local vertex ``vertex``.  Returns barycentric points and weights
    (summing to 1/2)."""
    q = triangle_rule(degree)
    v = np.eye(3)[vertex]
    e1, e2 = np.eye(3)[(vertex + 1) % 3], np.eye(3)[(vertex + 2) % 3]

    def at(rho, e):
        return v + rho * (e - v)

    pieces = []
    for l in range(levels):
        a, b = 2.0 ** -(l + 1), 2.0**-l
        A1, A2, B1, B2 = at(a, e1), at(a, e2), at(b, e1), at(b, e2)
        pieces += [(A1, B1, B2), (A1, B2, A2)]
    a = 2.0**-levels
    pieces.append((v, at(a, e1), at(a, e2)))

    pts, wts = [], []
    for c in pieces:
        C = np.array(c)  # rows: corner barycentrics
        # ratio of the sub-triangle area to the reference area
        ratio = abs(np.linalg.det(C))
        pts.append(q.points @ C)
        wts.append(q.weights * ratio)
    P = np.concatenate(pts)
    W = np.concatenate(wts)
    P.setflags(write=False)
    W.setflags(write=False)
    return P, W


def corner_elements(mesh, point, tol: float = 1e-12):
    """Triangles having ``point`` as a vertex, with the local vertex index."""
    d = np.linalg.norm(mesh.vertices_of - np.asarray(point)[None, None, :], axis=2)
    t, j = np.nonzero(d <= tol)
    return t, j


@dataclass
class ErrorNorms:
    errA: float
    err_grad: Optional[float] = None


def _integrate(mesh, integrand, degree, singular_point, corner_degree, levels):
    """Sum over triangles of ``int_K integrand``; ``integrand(bary, elements)``
    returns pointwise values (T', P)."""
    T = mesh.n_triangles
    regular = np.ones(T, dtype=bool)
    total = 0.0
    if singular_point is not None:
        ct, cj = corner_elements(mesh, singular_point)
        regular[ct] = False
        for j in np.unique(cj):
            sel = ct[cj == j]
            P, W = graded_rule(int(j), corner_degree, levels)
            vals = integrand(np.broadcast_to(P, (len(sel),) + P.shape), sel)
            total += float(np.sum(vals @ W * 2.0 * mesh.areas[sel]))
    sel = np.flatnonzero(regular)
    if len(sel):
        q = triangle_rule(degree)
        vals = integrand(np.broadcast_to(q.points, (len(sel),) + q.points.shape), sel)
        total += float(np.sum(vals @ q.weights * 2.0 * mesh.areas[sel]))
    return total


def _physical(mesh, bary, elements):
    return np.einsum("tpi,tix->tpx", bary, mesh.vertices_of[elements])


def error_norms(
    solution: Solution,
    exact,
    post=None,
    degree: int = 14,
    corner_degree: int = 20,
    levels: int = 40,
) -> ErrorNorms:
    """``||sigma - sigma_h||_A`` and, with a postprocessed displacement,
    ``||grad_h(u - u*)||_0``.  Triangles touching ``exact.singular_point``
    use a graded composite rule."""
    mesh = solution.mesh
    A = solution.A
    sp_ = getattr(exact, "singular_point", None)

    def stress(bary, el):
        X = _physical(mesh, bary, el)
        S = exact.sigma(X.reshape(-1, 2)).reshape(X.shape[:2] + (2, 2))
        D = S - solution.sigma_at(bary, el)
        return np.einsum("tpij,tpij->tp", A.apply(D), D)

    errA = np.sqrt(_integrate(mesh, stress, degree, sp_, corner_degree, levels))
    err_grad = None
    if post is not None:

        def grad(bary, el):
            X = _physical(mesh, bary, el)
            G = exact.grad_u(X.reshape(-1, 2)).reshape(X.shape[:2] + (2, 2))
            D = G - post.grad_at(bary, el)
            return np.einsum("tpij,tpij->tp", D, D)

        err_grad = float(np.sqrt(_integrate(mesh, grad, degree, sp_, corner_degree, levels)))
    return ErrorNorms(float(errA), err_grad)


def eoc(values, mode: str = "uniform", dofs=None) -> np.ndarray:
    """Experimental orders.

    ``uniform``: ``log2(e[i-1] / e[i])`` per level (NaN for the first).
    ``dofs``: least-squares slope of ``log e`` against ``log dofs`` over the
    last half of the entries, returned as a 1-element array.
    """
    e = np.asarray(values, dtype=float)
    if len(e) < 2:
        raise ValueError("need at least two values")
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise ValueError("errors must be positive")
    if mode == "uniform":
        return np.concatenate([[np.nan], np.log2(e[:-1] / e[1:])])
    if mode == "dofs":
        n = np.asarray(dofs, dtype=float)
        if n.shape != e.shape:
            raise ValueError("dofs and values differ in length")
        k = max(2, len(e) // 2)
        slope = np.polyfit(np.log(n[-k:]), np.log(e[-k:]), 1)[0]
        return np.array([slope])
    raise ValueError(f"unknown mode {mode!r}")

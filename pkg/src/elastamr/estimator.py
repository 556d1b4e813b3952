"""Residual a posteriori error estimator for the stress.

With ``X = A sigma_h`` the local contributions are

    eta_K^2 = h_K^4 ||curl curl X||_K^2
    eta_e^2 = h_e ||J1||_e^2 + h_e^3 ||J2||_e^2

where on interior edges ``J1 = [X t . t]`` and ``J2 = [curl X . t]``; on
Dirichlet edges ``J1 = X t . t - d_t(u_D . t)`` and
``J2 = curl X . t + d_tt(u_D . nu) - d_t(X t . nu)``.  Neumann edges carry
no jump terms (see :func:`edge_jumps`).  ``curl`` acts row-wise and
``t = (-nu_2, nu_1)`` for the outward normal ``nu``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .elements import Compliance, lagrange, reference_mass
from .mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh
from .quadrature import edge_rule, triangle_rule
from .system import Solution, edge_bary


@dataclass
class Indicators:
    """Squared indicators: per triangle, per edge, and the aggregate per triangle."""

    eta_K_sq: np.ndarray
    eta_e_sq: np.ndarray
    eta_elem_sq: np.ndarray

    @property
    def total_sq(self) -> float:
        return float(self.eta_K_sq.sum() + self.eta_e_sq.sum())

    @property
    def total(self) -> float:
        return float(np.sqrt(self.total_sq))

    def to_csv(self, path) -> None:
        T = len(self.eta_K_sq)
        data = np.column_stack([np.arange(T), self.eta_K_sq, self.eta_elem_sq])
        np.savetxt(path, data, delimiter=",", header="triangle_id,eta_K_sq,eta_elem_sq",
                   comments="", fmt=["%d", "%.16e", "%.16e"])


@dataclass
class Oscillation:
    f_sq: float
    g_sq: float
    u_D_sq: float

    @property
    def total(self) -> float:
        return float(np.sqrt(self.f_sq + self.g_sq + self.u_D_sq))


def _apply_A_stack(A: Compliance, X: np.ndarray) -> np.ndarray:
    """``A`` on the matrix axes (2, 3) of an array (T, P, 2, 2, ...)."""
    tr = X[:, :, 0, 0] + X[:, :, 1, 1]
    out = X.copy()
    c = A.trace_factor
    out[:, :, 0, 0] -= c * tr
    out[:, :, 1, 1] -= c * tr
    return out / (2.0 * A.mu)


def curlcurl(H: np.ndarray) -> np.ndarray:
    """``d11 X22 - d12 (X12 + X21) + d22 X11`` for Hessians (..., 2, 2, x, y)."""
    return (
        H[..., 1, 1, 0, 0]
        - H[..., 0, 1, 0, 1]
        - H[..., 1, 0, 0, 1]
        + H[..., 0, 0, 1, 1]
    )


def row_curl(G: np.ndarray) -> np.ndarray:
    """Row-wise curl ``d1 X_i2 - d2 X_i1`` of gradients (..., 2, 2, x)."""
    return G[..., :, 1, 0] - G[..., :, 0, 1]


def element_size(mesh: Mesh, size: str = "area") -> np.ndarray:
    """Local mesh size used in the estimator: ``sqrt(|K|)`` or the diameter.

    The area-based size is the default; with it the estimator reproduces the
    published reference values for the smooth benchmark.
    """
    if size == "area":
        return np.sqrt(mesh.areas)
    if size == "diameter":
        return mesh.diameters
    raise ValueError(f"unknown element size {size!r}")


def element_residual(solution: Solution, degree: int = 8, size: str = "area") -> np.ndarray:
    mesh = solution.mesh
    q = triangle_rule(degree)
    AH = _apply_A_stack(solution.A, solution.sigma_hess_at(q.points))
    cc = curlcurl(AH)
    integral = (cc**2) @ q.weights * 2.0 * mesh.areas
    return element_size(mesh, size) ** 4 * integral


def _side_fields(solution: Solution, elems, j, s):
    bary = edge_bary(j, s)
    X = _apply_A_stack(solution.A, solution.sigma_at(bary, elems))
    G = _apply_A_stack(solution.A, solution.sigma_grad_at(bary, elems))
    return X, G


def edge_jumps(solution: Solution, u_D: Optional[object] = None, degree: int = 10,
               neumann: str = "omit"):
    """Squared jumps ``(||J1||_e^2, ||J2||_e^2)`` per edge.

    ``u_D`` must provide ``value``, ``grad`` and ``hess`` (gradient
    ``[i, j] = d_j u_i``); ``None`` means homogeneous data.

    On traction edges the Airy test function and its normal derivative
    vanish, so by default (``neumann="omit"``) those edges carry no jump
    terms.  ``neumann="traction-free"`` keeps the homogeneous Dirichlet
    form there instead; it is not consistent for nonzero ``u . t``.
    """
    if neumann not in ("omit", "traction-free"):
        raise ValueError(f"unknown neumann mode {neumann!r}")
    mesh = solution.mesh
    ed = mesh.edges
    q = edge_rule(degree)
    s = q.points
    E = len(ed)
    nu, t = ed.normals, ed.tangents

    X, G = _side_fields(solution, ed.elements[:, 0], ed.local_index[:, 0], s)
    J1 = np.einsum("eqij,ei,ej->eq", X, t, t)
    J2 = np.einsum("eqi,ei->eq", row_curl(G), t)

    inner = np.flatnonzero(ed.labels == INTERIOR)
    if len(inner):
        Xm, Gm = _side_fields(solution, ed.elements[inner, 1], ed.local_index[inner, 1], 1.0 - s)
        J1[inner] -= np.einsum("eqij,ei,ej->eq", Xm, t[inner], t[inner])
        J2[inner] -= np.einsum("eqi,ei->eq", row_curl(Gm), t[inner])

    bnd = np.flatnonzero(ed.labels != INTERIOR)
    tb, nb = t[bnd], nu[bnd]
    J2[bnd] -= np.einsum("eqijk,ei,ej,ek->eq", G[bnd], tb, nb, tb)

    dir_ = np.flatnonzero(ed.labels == DIRICHLET)
    if u_D is not None and len(dir_):
        bary = edge_bary(ed.local_index[dir_, 0], s)
        P = np.einsum("eqi,eix->eqx", bary, mesh.vertices_of[ed.elements[dir_, 0]]).reshape(-1, 2)
        n = len(s)
        Du = np.asarray(u_D.grad(P)).reshape(len(dir_), n, 2, 2)
        Hu = np.asarray(u_D.hess(P)).reshape(len(dir_), n, 2, 2, 2)
        td, nd = t[dir_], nu[dir_]
        J1[dir_] -= np.einsum("eqij,ei,ej->eq", Du, td, td)
        J2[dir_] += np.einsum("eqijk,ei,ej,ek->eq", Hu, nd, td, td)

    if neumann == "omit":
        neu = ed.labels == NEUMANN
        J1[neu] = 0.0
        J2[neu] = 0.0

    L = ed.lengths
    return (J1**2) @ q.weights * L, (J2**2) @ q.weights * L


def edge_residual(solution: Solution, u_D=None, degree: int = 10,
                  neumann: str = "omit") -> np.ndarray:
    j1, j2 = edge_jumps(solution, u_D, degree, neumann)
    L = solution.mesh.edges.lengths
    return L * j1 + L**3 * j2


def aggregate(mesh: Mesh, eta_K_sq: np.ndarray, eta_e_sq: np.ndarray) -> np.ndarray:
    """Per-triangle indicator: interior edges are shared half and half."""
    ed = mesh.edges
    w = np.where(ed.labels == INTERIOR, 0.5, 1.0) * eta_e_sq
    out = np.array(eta_K_sq, dtype=float, copy=True)
    np.add.at(out, ed.elements[:, 0], w)
    inner = ed.elements[:, 1] >= 0
    np.add.at(out, ed.elements[inner, 1], w[inner])
    return out


def estimate(
    solution: Solution, u_D=None, degree: int = 8, edge_degree: int = 10, size: str = "area",
    neumann: str = "omit",
) -> Indicators:
    eK = element_residual(solution, degree, size)
    ee = edge_residual(solution, u_D, edge_degree, neumann)
    return Indicators(eK, ee, aggregate(solution.mesh, eK, ee))


# ---------------------------------------------------------------------------
# data oscillation


def _legendre_table(s: np.ndarray, k: int, deriv: int = 0) -> np.ndarray:
    """Orthonormal Legendre polynomials on [0, 1] (or their s-derivatives), (len(s), k+1)."""
    x = 2.0 * s - 1.0
    cols = []
    for n in range(k + 1):
        c = np.zeros(n + 1)
        c[n] = np.sqrt(2 * n + 1)
        for _ in range(deriv):
            c = np.polynomial.legendre.legder(c) * 2.0
        cols.append(np.polynomial.legendre.legval(x, c) if len(c) else np.zeros_like(x))
    return np.column_stack(cols)


def oscillations(
    solution: Solution,
    f: Optional[Callable] = None,
    g: Optional[Callable] = None,
    u_D=None,
    degree: int = 8,
    edge_degree: int = 10,
    k: int = 3,
    size: str = "area",
) -> Oscillation:
    """Data oscillation of the load (projection onto P2 per triangle), the
    traction and the Dirichlet datum (edgewise P_k projections)."""
    mesh = solution.mesh
    f_sq = g_sq = u_sq = 0.0
    if f is not None:
        q = triangle_rule(degree)
        psi = lagrange(2)(q.points)
        Minv = np.linalg.inv(reference_mass(2, 2))
        fv = np.asarray(f(mesh.to_physical(q.points).reshape(-1, 2))).reshape(mesh.n_triangles, -1, 2)
        c = np.einsum("ab,q,qb,tqd->tad", Minv, q.weights, psi, fv)
        r = fv - np.einsum("qa,tad->tqd", psi, c)
        per = np.einsum("q,tqd->t", q.weights, r**2) * 2.0 * mesh.areas
        f_sq = float(np.sum(element_size(mesh, size) ** 2 * per))

    ed = mesh.edges
    q = edge_rule(edge_degree)
    s, w = q.points, q.weights
    P0 = _legendre_table(s, k)

    def project(v):  # (E, Q) -> (E, k+1)
        return np.einsum("q,qn,eq->en", w, P0, v)

    def points(sel):
        bary = edge_bary(ed.local_index[sel, 0], s)
        return np.einsum("eqi,eix->eqx", bary, mesh.vertices_of[ed.elements[sel, 0]])

    neu = np.flatnonzero(ed.labels == NEUMANN)
    if g is not None and len(neu):
        X = points(neu)
        nrm = np.repeat(ed.normals[neu], len(s), axis=0)
        gv = np.asarray(g(X.reshape(-1, 2), nrm)).reshape(len(neu), len(s), 2)
        L = ed.lengths[neu]
        total = 0.0
        for d in range(2):
            r = gv[..., d] - project(gv[..., d]) @ P0.T
            total += np.sum(L**2 * ((r**2) @ w * L))
        g_sq = float(total)

    dir_ = np.flatnonzero(ed.labels == DIRICHLET)
    if u_D is not None and len(dir_):
        X = points(dir_).reshape(-1, 2)
        n = len(s)
        uv = np.asarray(u_D.value(X)).reshape(len(dir_), n, 2)
        Du = np.asarray(u_D.grad(X)).reshape(len(dir_), n, 2, 2)
        Hu = np.asarray(u_D.hess(X)).reshape(len(dir_), n, 2, 2, 2)
        t, nu = ed.tangents[dir_], ed.normals[dir_]
        L = ed.lengths[dir_]
        P1 = _legendre_table(s, k, 1)
        P2 = _legendre_table(s, k, 2)
        ut = np.einsum("eqi,ei->eq", uv, t)
        un = np.einsum("eqi,ei->eq", uv, nu)
        dut = np.einsum("eqij,ei,ej->eq", Du, t, t)
        ddun = np.einsum("eqijk,ei,ej,ek->eq", Hu, nu, t, t)
        r1 = dut - (project(ut) @ P1.T) / L[:, None]
        r2 = ddun - (project(un) @ P2.T) / L[:, None] ** 2
        u_sq = float(np.sum(L * ((r1**2) @ w * L) + L**3 * ((r2**2) @ w * L)))
    return Oscillation(f_sq, g_sq, u_sq)

"""Local postprocessing of the displacement and related norms.

On each triangle ``u* in P4`` satisfies ``Q_h u* = u_h`` (P2 moments) and
``(eps(u*), eps(w)) = (A sigma_h, eps(w))`` for all ``w`` in the
L2-orthogonal complement of P2 in P4.  Writing ``u* = u_h + z`` with ``z``
in that complement leaves an 18x18 SPD system per triangle.  The complement
is affine invariant, so its basis is computed once on the reference
triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .elements import lagrange, reference_mass
from .mesh import INTERIOR, Mesh
from .quadrature import edge_rule, triangle_rule
from .system import Solution, edge_bary, evaluate, evaluate_grad


@lru_cache(maxsize=None)
def _embedding() -> np.ndarray:
    """P2 basis written in P4 nodal values, (15, 6)."""
    return lagrange(2)(lagrange(4).nodes)


@lru_cache(maxsize=None)
def complement_basis() -> np.ndarray:
    """P4 nodal coefficients (15, 9) of an L2-orthonormal basis of P4 minus P2."""
    M4 = reference_mass(4, 4)
    moments = _embedding().T @ M4  # (6, 15)
    Z = sla.null_space(moments)
    # orthonormalize in the mass inner product
    G = Z.T @ M4 @ Z
    return Z @ np.linalg.inv(np.linalg.cholesky(G)).T


def _sym(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + np.swapaxes(G, -1, -2))


@dataclass
class PostSolution:
    """Postprocessed displacement: P4 nodal values, ``ustar`` of shape (T, 2, 15)."""

    mesh: Mesh
    ustar: np.ndarray

    def _nodes(self, elements):
        n = self.ustar if elements is None else self.ustar[elements]
        return np.moveaxis(n, 1, 2)

    def at(self, bary, elements=None):
        return evaluate(self._nodes(elements), 4, bary)

    def grad_at(self, bary, elements=None):
        G = self.mesh.grad_lambda if elements is None else self.mesh.grad_lambda[elements]
        return evaluate_grad(self._nodes(elements), 4, bary, G)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """Flat per-element coefficient vectors, (T, 30)."""
        return self.ustar.reshape(len(self.ustar), -1)


def postprocess_displacement(solution: Solution, degree: int = 8) -> PostSolution:
    mesh = solution.mesh
    T = mesh.n_triangles
    q = triangle_rule(degree)
    Z = complement_basis()
    dz = lagrange(4).d1(q.points)  # (Q, 15, 3)
    dz = np.einsum("qnl,na->qal", dz, Z)  # (Q, 9, 3)
    gz = np.einsum("qal,tlx->tqax", dz, mesh.grad_lambda)  # (T, Q, 9, 2)

    # eps(z_a e_d) as (T, Q, 9, 2, 2, 2): index d then the matrix
    eye = np.eye(2)
    E = 0.5 * (
        np.einsum("dj,tqai->tqadij", eye, gz) + np.einsum("di,tqaj->tqadij", eye, gz)
    )
    E = E.reshape(T, len(q.weights), 18, 2, 2)
    w = q.weights[None, :] * (2.0 * mesh.areas)[:, None]

    K = np.einsum("tq,tqaij,tqbij->tab", w, E, E)
    A = solution.A
    target = A.apply(solution.sigma_at(q.points)) - _sym(solution.u_grad_at(q.points))
    rhs = np.einsum("tq,tqij,tqaij->ta", w, target, E)
    c = np.linalg.solve(K, rhs[..., None])[..., 0].reshape(T, 9, 2)

    base = np.einsum("na,tda->tdn", _embedding(), solution.u_nodes)
    ustar = base + np.einsum("na,tad->tdn", Z, c)
    return PostSolution(mesh, ustar)


# ---------------------------------------------------------------------------
# fields and norms


class Field:
    """Piecewise smooth vector field evaluated at per-triangle barycentric points."""

    def at(self, bary, elements=None):  # pragma: no cover - interface
        raise NotImplementedError

    def grad_at(self, bary, elements=None):  # pragma: no cover - interface
        raise NotImplementedError

    def __sub__(self, other: "Field") -> "Field":
        return _Difference(self, other)


class _Difference(Field):
    def __init__(self, a, b):
        self.a, self.b = a, b

    def at(self, bary, elements=None):
        return self.a.at(bary, elements) - self.b.at(bary, elements)

    def grad_at(self, bary, elements=None):
        return self.a.grad_at(bary, elements) - self.b.grad_at(bary, elements)


class ExactField(Field):
    """A globally defined field ``u(x)`` with gradient ``grad(x)[i, j] = d_j u_i``."""

    def __init__(self, mesh: Mesh, u: Callable, grad: Callable):
        self.mesh, self.u, self.grad = mesh, u, grad

    def _eval(self, fn, bary, elements, shape):
        bary = np.asarray(bary, dtype=float)
        V = self.mesh.vertices_of if elements is None else self.mesh.vertices_of[elements]
        sub = "pi,tix->tpx" if bary.ndim == 2 else "tpi,tix->tpx"
        X = np.einsum(sub, bary, V)
        return np.asarray(fn(X.reshape(-1, 2))).reshape(X.shape[:2] + shape)

    def at(self, bary, elements=None):
        return self._eval(self.u, bary, elements, (2,))

    def grad_at(self, bary, elements=None):
        return self._eval(self.grad, bary, elements, (2, 2))


class DiscreteDisplacement(Field):
    """View of the P2 displacement of a solution as a ``Field``."""

    def __init__(self, solution: Solution):
        self.solution = solution

    def at(self, bary, elements=None):
        return self.solution.u_at(bary, elements)

    def grad_at(self, bary, elements=None):
        return self.solution.u_grad_at(bary, elements)


class PostField(Field):
    def __init__(self, post: PostSolution):
        self.post = post

    def at(self, bary, elements=None):
        return self.post.at(bary, elements)

    def grad_at(self, bary, elements=None):
        return self.post.grad_at(bary, elements)


def _volume(mesh: Mesh, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-triangle integral of pointwise values (T, Q)."""
    return values @ weights * 2.0 * mesh.areas


def grad_seminorm(mesh: Mesh, v: Field, degree: int = 8) -> float:
    """Broken gradient norm ``||grad_h v||_0``."""
    q = triangle_rule(degree)
    G = v.grad_at(q.points)
    return float(np.sqrt(np.sum(_volume(mesh, np.einsum("tqij,tqij->tq", G, G), q.weights))))


def norm_1h(mesh: Mesh, v: Field, degree: int = 8, edge_degree: int = 10) -> float:
    """``|v|_{1,h}^2 = ||eps_h(v)||^2 + sum_e h_e^{-1} ||[v]||_e^2``; the jump on a
    boundary edge is the one-sided trace."""
    q = triangle_rule(degree)
    eps = _sym(v.grad_at(q.points))
    total = np.sum(_volume(mesh, np.einsum("tqij,tqij->tq", eps, eps), q.weights))

    ed = mesh.edges
    qe = edge_rule(edge_degree)
    s = qe.points
    jump = v.at(edge_bary(ed.local_index[:, 0], s), ed.elements[:, 0])
    inner = np.flatnonzero(ed.labels == INTERIOR)
    if len(inner):
        other = v.at(edge_bary(ed.local_index[inner, 1], 1.0 - s), ed.elements[inner, 1])
        jump[inner] -= other
    sq = np.einsum("eqd,eqd->eq", jump, jump) @ qe.weights * ed.lengths
    total += np.sum(sq / ed.lengths)
    return float(np.sqrt(total))


def indicator_Aeps(solution: Solution, post: PostSolution, degree: int = 8) -> float:
    """``||A sigma_h - eps_h(u*)||_0``."""
    q = triangle_rule(degree)
    d = solution.A.apply(solution.sigma_at(q.points)) - _sym(post.grad_at(q.points))
    mesh = solution.mesh
    return float(np.sqrt(np.sum(_volume(mesh, np.einsum("tqij,tqij->tq", d, d), q.weights))))

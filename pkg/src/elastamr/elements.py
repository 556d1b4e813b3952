"""Finite element building blocks.

Scalar Lagrange bases are written in barycentric coordinates as
homogeneous polynomials, which makes their reference integrals affine
invariant: an integral over a physical triangle ``K`` is ``2|K|`` times the
integral over the reference triangle.

The Hu-Zhang stress space of degree 3 is realized as a cubic Lagrange space
with matrix-valued nodal values.  At vertices and at the interior node the
three symmetric components are used.  At the two Lagrange nodes of an edge
the value is split in the frame of the edge, ``nn^T``, ``nt^T + tn^T`` and
``tt^T``.  The first two carry the normal trace and are shared by the two
neighbouring triangles, the last one is element local: a cubic edge-node
function times ``tt^T`` has zero normal trace on the whole boundary of the
triangle and is therefore an H(div) bubble.  This gives
``dim = 3 #V + 4 #E + 9 #T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .quadrature import triangle_rule

# symmetric unit matrices for the components (11, 12, 22)
SYM_UNITS = np.array(
    [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 1.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]]]
)

# local edge j is opposite local vertex j and runs from vertex j+1 to j+2
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True)
class Compliance:
    """Isotropic compliance tensor ``A`` with Lame constants ``lam``, ``mu``."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam >= 0.0 and self.mu > 0.0):
            raise ValueError(f"invalid Lame parameters lam={self.lam}, mu={self.mu}")

    @classmethod
    def from_young_poisson(cls, E: float, nu: float) -> "Compliance":
        lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        mu = E / (2.0 * (1.0 + nu))
        return cls(lam, mu)

    @property
    def trace_factor(self) -> float:
        return self.lam / (2.0 * self.mu + 2.0 * self.lam)

    def apply(self, tau: np.ndarray) -> np.ndarray:
        """``A tau`` for arrays of 2x2 matrices (last two axes)."""
        tau = np.asarray(tau, dtype=float)
        tr = tau[..., 0, 0] + tau[..., 1, 1]
        out = tau - self.trace_factor * tr[..., None, None] * np.eye(2)
        return out / (2.0 * self.mu)

    def apply_inverse(self, eps: np.ndarray) -> np.ndarray:
        """``C eps = 2 mu eps + lam tr(eps) I``."""
        eps = np.asarray(eps, dtype=float)
        tr = eps[..., 0, 0] + eps[..., 1, 1]
        return 2.0 * self.mu * eps + self.lam * tr[..., None, None] * np.eye(2)


def apply_A(A: Compliance, tau: np.ndarray) -> np.ndarray:
    return A.apply(tau)


def apply_C(A: Compliance, eps: np.ndarray) -> np.ndarray:
    return A.apply_inverse(eps)


def _exponents(k: int) -> np.ndarray:
    return np.array(
        [(k - i - j, i, j) for i in range(k + 1) for j in range(k + 1 - i)], dtype=int
    )


def _lattice_nodes(k: int) -> np.ndarray:
    """Lagrange nodes ordered vertices, edges (local edge order), interior."""
    nodes = [np.eye(3)[i] for i in range(3)]
    for p, q in LOCAL_EDGES:
        for r in range(1, k):
            b = np.zeros(3)
            b[p] = (k - r) / k
            b[q] = r / k
            nodes.append(b)
    for i in range(1, k):
        for j in range(1, k - i):
            nodes.append(np.array([k - i - j, i, j], dtype=float) / k)
    return np.array(nodes)


class LagrangeBasis:
    """Scalar Lagrange basis of degree ``k`` on a triangle.

    Evaluators take barycentric points of shape ``(..., 3)``.  Derivatives
    are with respect to the barycentric coordinates; chain them with the
    gradients of the barycentric functions to get physical derivatives.
    """

    def __init__(self, degree: int):
        if degree < 1:
            raise ValueError("degree must be positive")
        self.degree = degree
        self.exponents = _exponents(degree)
        self.nodes = _lattice_nodes(degree)
        vander = self._monomials(self.nodes, self.exponents)
        self.coeffs = np.linalg.inv(vander)  # columns: basis functions
        self.dim = len(self.nodes)

        eye = np.eye(3, dtype=int)
        self._d1 = []
        for l in range(3):
            ex = self.exponents - eye[l]
            self._d1.append((self.exponents[:, l].astype(float), np.maximum(ex, 0)))
        self._d2 = {}
        for l in range(3):
            for m in range(3):
                ex = self.exponents - eye[l] - eye[m]
                c = self.exponents[:, l] * (self.exponents[:, m] - (1 if l == m else 0))
                self._d2[l, m] = (c.astype(float), np.maximum(ex, 0))

    @staticmethod
    def _monomials(bary: np.ndarray, exps: np.ndarray) -> np.ndarray:
        bary = np.asarray(bary, dtype=float)
        return np.prod(bary[..., None, :] ** exps, axis=-1)

    def __call__(self, bary: np.ndarray) -> np.ndarray:
        return self._monomials(bary, self.exponents) @ self.coeffs

    def d1(self, bary: np.ndarray) -> np.ndarray:
        """Barycentric gradient, shape ``(..., n, 3)``."""
        out = [(c * self._monomials(bary, ex)) @ self.coeffs for c, ex in self._d1]
        return np.stack(out, axis=-1)

    def d2(self, bary: np.ndarray) -> np.ndarray:
        """Barycentric Hessian, shape ``(..., n, 3, 3)``."""
        shape = np.shape(bary)[:-1] + (self.dim, 3, 3)
        out = np.empty(shape)
        for (l, m), (c, ex) in self._d2.items():
            out[..., l, m] = (c * self._monomials(bary, ex)) @ self.coeffs
        return out


@lru_cache(maxsize=None)
def lagrange(degree: int) -> LagrangeBasis:
    return LagrangeBasis(degree)


@lru_cache(maxsize=None)
def reference_mass(k1: int, k2: int) -> np.ndarray:
    """``int_ref phi_i psi_j`` for Lagrange bases of degrees k1, k2."""
    q = triangle_rule(k1 + k2)
    a = lagrange(k1)(q.points)
    b = lagrange(k2)(q.points)
    return np.einsum("q,qi,qj->ij", q.weights, a, b)


@lru_cache(maxsize=None)
def reference_derivative_mass(k1: int, k2: int) -> np.ndarray:
    """``D[l, i, j] = int_ref d(phi_i)/d(lambda_l) psi_j``."""
    q = triangle_rule(k1 + k2)
    d = lagrange(k1).d1(q.points)
    b = lagrange(k2)(q.points)
    return np.einsum("q,qil,qj->lij", q.weights, d, b)


# ---------------------------------------------------------------------------
# stress space layouts


@dataclass(frozen=True)
class StressLayout:
    """Local stress shape functions ``sum_n W[a, n] phi_n * S[t, a]``.

    ``W`` holds the cubic Lagrange coefficients of the scalar factor of each
    local function (the same for all triangles), ``S`` the constant matrix
    factor per triangle.  ``kind`` tags the dof class of each local function.
    """

    W: np.ndarray  # (n_loc, 10)
    S: np.ndarray  # (T, n_loc, 2, 2)
    kind: tuple

    @property
    def n_local(self) -> int:
        return self.W.shape[0]


def edge_frames(normals: np.ndarray):
    """nn^T, nt^T + tn^T and tt^T for unit normals of shape (..., 2)."""
    n = np.asarray(normals, dtype=float)
    t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
    nn = n[..., :, None] * n[..., None, :]
    nt = n[..., :, None] * t[..., None, :]
    nt = nt + np.swapaxes(nt, -1, -2)
    tt = t[..., :, None] * t[..., None, :]
    return nn, nt, tt


HZ_KIND = (
    ("vertex",) * 9 + ("edge-normal",) * 12 + ("edge-tangential",) * 6 + ("interior",) * 3
)


def hz_layout(edge_normals: np.ndarray) -> StressLayout:
    """Local Hu-Zhang (k=3) basis, 30 functions per triangle.

    ``edge_normals`` has shape ``(T, 3, 2)``: a unit normal of each local
    edge.  Its sign does not matter, the frame matrices are invariant.

    Order: 9 vertex (3 vertices x 3 components), 12 edge-normal (3 edges x
    2 nodes x {nn, nt}), 6 edge-tangential (3 edges x 2 nodes), 3 interior.
    """
    T = edge_normals.shape[0]
    nn, nt, tt = edge_frames(edge_normals)  # (T, 3, 2, 2)
    W = np.zeros((30, 10))
    S = np.empty((T, 30, 2, 2))
    a = 0
    for i in range(3):
        for c in range(3):
            W[a, i] = 1.0
            S[:, a] = SYM_UNITS[c]
            a += 1
    for j in range(3):
        for r in range(2):
            for frame in (nn, nt):
                W[a, 3 + 2 * j + r] = 1.0
                S[:, a] = frame[:, j]
                a += 1
    for j in range(3):
        for r in range(2):
            W[a, 3 + 2 * j + r] = 1.0
            S[:, a] = tt[:, j]
            a += 1
    for c in range(3):
        W[a, 9] = 1.0
        S[:, a] = SYM_UNITS[c]
        a += 1
    return StressLayout(W, S, HZ_KIND)


def bubble_coefficients(i: int, j: int, m: int) -> np.ndarray:
    """Cubic Lagrange coefficients of ``lambda_i lambda_j lambda_m``."""
    nodes = lagrange(3).nodes
    return nodes[:, i] * nodes[:, j] * nodes[:, m]


GEN_KIND = ("vertex",) * 9 + ("edge-node",) * 18 + ("interior",) * 3 + ("bubble",) * 6


def generating_layout(vertices: np.ndarray) -> StressLayout:
    """The 36-function set: full C0 cubic Lagrange (x 3 components) plus the
    six bubbles ``lambda_i lambda_j lambda_i T_ij``, ``lambda_i lambda_j
    lambda_j T_ij`` (i < j) with ``T_ij = t_ij t_ij^T``.

    ``vertices`` has shape ``(T, 3, 2)``.  This set spans the same local
    space as :func:`hz_layout` but is linearly dependent (rank 30).
    """
    T = vertices.shape[0]
    W = np.zeros((36, 10))
    S = np.empty((T, 36, 2, 2))
    for n in range(10):
        for c in range(3):
            a = 3 * n + c if n < 9 else 27 + c
            W[a, n] = 1.0
            S[:, a] = SYM_UNITS[c]
    a = 30
    for i, j in combinations(range(3), 2):
        t = vertices[:, j] - vertices[:, i]
        t = t / np.linalg.norm(t, axis=1)[:, None]
        Tij = t[:, :, None] * t[:, None, :]
        for m in (i, j):
            W[a] = bubble_coefficients(i, j, m)
            S[:, a] = Tij
            a += 1
    return StressLayout(W, S, GEN_KIND)


def eval_stress_basis(layout: StressLayout, grad_lambda: np.ndarray, bary, order: int = 0):
    """Values or derivatives of the local stress functions at barycentric points.

    ``grad_lambda`` is ``(T, 3, 2)``.  Returns arrays of shape
    ``(T, P, n_loc, 2, 2)`` for order 0, ``(..., 2, 2, 2)`` (last axis the
    derivative direction) for order 1 and ``(..., 2, 2, 2, 2)`` for order 2.
    """
    bary = np.atleast_2d(np.asarray(bary, dtype=float))
    if np.any(bary < -1e-12) or np.any(np.abs(bary.sum(axis=-1) - 1.0) > 1e-12):
        raise ValueError("point outside the element")
    L = lagrange(3)
    if order == 0:
        phi = L(bary) @ layout.W.T  # (P, n_loc)
        return np.einsum("pa,tajk->tpajk", phi, layout.S)
    if order == 1:
        d = np.einsum("pnl,an->pal", L.d1(bary), layout.W)
        grad = np.einsum("pal,tlx->tpax", d, grad_lambda)
        return np.einsum("tpax,tajk->tpajkx", grad, layout.S)
    if order == 2:
        d = np.einsum("pnlm,an->palm", L.d2(bary), layout.W)
        hess = np.einsum("palm,tlx,tmy->tpaxy", d, grad_lambda, grad_lambda)
        return np.einsum("tpaxy,tajk->tpajkxy", hess, layout.S)
    raise ValueError("order must be 0, 1 or 2")

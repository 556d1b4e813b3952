"""Degree-of-freedom maps, saddle-point assembly and the direct solve.

The discrete problem is

    (A sigma, tau) + (div tau, u) = <u_D, tau nu>_{Gamma_D}
    (div sigma, v)               = (f, v)

assembled as one symmetric indefinite matrix ``[[M, B^T], [B, 0]]``.
Stress boundary values on the Neumann part are imposed by eliminating the
corresponding degrees of freedom.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elements import (
    LOCAL_EDGES,
    Compliance,
    generating_layout,
    hz_layout,
    lagrange,
    reference_derivative_mass,
    reference_mass,
)
from .mesh import DIRICHLET, NEUMANN, Mesh
from .quadrature import edge_rule, triangle_rule

log = logging.getLogger(__name__)

VectorField = Callable[[np.ndarray], np.ndarray]


class SolverError(RuntimeError):
    pass


class StressSpace:
    """Global stress space on a mesh.

    ``layout="hz"`` is the Hu-Zhang space used by the solver.
    ``layout="generating"`` is the 36-per-triangle generating set (full C0
    Lagrange plus six bubbles), which is linearly dependent; it exists for
    diagnostics only.
    """

    def __init__(self, mesh: Mesh, layout: str = "hz"):
        self.mesh = mesh
        self.layout_name = layout
        ed = mesh.edges
        V, E, T = mesh.n_vertices, len(ed), mesh.n_triangles
        el = mesh.elements
        e2e = ed.elem2edge
        # global node index along each local edge: 0 if the local edge starts
        # at the smaller global vertex
        start = el[:, LOCAL_EDGES[:, 0]]
        flip = (start != ed.vertices[e2e, 0]).astype(np.int64)  # (T, 3)

        if layout == "hz":
            self.layout = hz_layout(ed.normals[e2e])
            l2g = np.empty((T, 30), dtype=np.int64)
            for i in range(3):
                for c in range(3):
                    l2g[:, 3 * i + c] = 3 * el[:, i] + c
            a = 9
            for j in range(3):
                for r in range(2):
                    g = np.abs(r - flip[:, j])
                    for c in range(2):
                        l2g[:, a] = 3 * V + 4 * e2e[:, j] + 2 * g + c
                        a += 1
            base = 3 * V + 4 * E + 9 * np.arange(T)
            for b in range(9):
                l2g[:, 21 + b] = base + b
            self.n = 3 * V + 4 * E + 9 * T
        elif layout == "generating":
            self.layout = generating_layout(mesh.vertices_of)
            l2g = np.empty((T, 36), dtype=np.int64)
            for i in range(3):
                for c in range(3):
                    l2g[:, 3 * i + c] = 3 * el[:, i] + c
            for j in range(3):
                for r in range(2):
                    g = np.abs(r - flip[:, j])
                    n = 3 + 2 * j + r
                    for c in range(3):
                        l2g[:, 3 * n + c] = 3 * V + 6 * e2e[:, j] + 3 * g + c
            base = 3 * V + 6 * E + 9 * np.arange(T)
            for b in range(9):
                l2g[:, 27 + b] = base + b
            self.n = 3 * V + 6 * E + 9 * T
        else:
            raise ValueError(f"unknown stress layout {layout!r}")
        self.local2global = l2g

    @property
    def n_local(self) -> int:
        return self.layout.n_local


@dataclass(frozen=True)
class DofMap:
    stress: StressSpace
    n_sigma: int
    n_u: int

    @classmethod
    def build(cls, mesh: Mesh, layout: str = "hz") -> "DofMap":
        s = StressSpace(mesh, layout)
        return cls(s, s.n, 12 * mesh.n_triangles)

    @property
    def u_local2global(self) -> np.ndarray:
        T = self.stress.mesh.n_triangles
        return 12 * np.arange(T)[:, None] + np.arange(12)[None, :]


@dataclass
class Constraints:
    """Affine parametrization ``sigma = T y + x0`` of the Neumann-constrained dofs."""

    T: sp.csr_matrix
    x0: np.ndarray
    n_fixed: int

    @classmethod
    def none(cls, n: int) -> "Constraints":
        return cls(sp.identity(n, format="csr"), np.zeros(n), 0)


@dataclass
class SaddleSystem:
    dofs: DofMap
    A: Compliance
    M: sp.csr_matrix
    B: sp.csr_matrix
    rhs_sigma: np.ndarray
    rhs_u: np.ndarray
    constraints: Optional[Constraints] = None

    @property
    def mesh(self) -> Mesh:
        return self.dofs.stress.mesh

    @property
    def n_sigma(self) -> int:
        return self.dofs.n_sigma

    @property
    def n_u(self) -> int:
        return self.dofs.n_u

    @property
    def order(self) -> int:
        return self.n_sigma + self.n_u

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.M, self.B.T], [self.B, None]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_sigma, self.rhs_u])

    def dump_coo(self, path) -> None:
        """Write the block matrix as ``row col value`` lines."""
        K = self.matrix().tocoo()
        with open(path, "w") as fh:
            for r, c, v in zip(K.row, K.col, K.data):
                fh.write(f"{r} {c} {float(v)!r}\n")


# ---------------------------------------------------------------------------
# local matrices


def local_mass(space: StressSpace, A: Compliance) -> np.ndarray:
    """Local ``(A phi_a, phi_b)_K`` matrices, (T, n, n)."""
    lay = space.layout
    WM = lay.W @ reference_mass(3, 3) @ lay.W.T
    AS = A.apply(lay.S)
    G = np.einsum("tajk,tbjk->tab", AS, lay.S)
    area2 = 2.0 * space.mesh.areas
    return area2[:, None, None] * WM[None] * G


def local_div(space: StressSpace) -> np.ndarray:
    """Local ``(div phi_a, psi_c)_K`` matrices, (T, 12, n).

    Displacement functions are ordered component-major: ``c = 6 d + p``.
    """
    lay = space.layout
    mesh = space.mesh
    WD = np.einsum("an,lnp->lap", lay.W, reference_derivative_mass(3, 2))
    SG = np.einsum("tajk,tlk->tajl", lay.S, mesh.grad_lambda)  # (S_a grad lambda_l)_j
    Bl = np.einsum("tadl,lap->tdpa", SG, WD)
    T = mesh.n_triangles
    return (2.0 * mesh.areas)[:, None, None] * Bl.reshape(T, 12, -1)


def _scatter_matrix(local, rows, cols, shape):
    T, m, n = local.shape
    R = np.broadcast_to(rows[:, :, None], (T, m, n))
    C = np.broadcast_to(cols[:, None, :], (T, m, n))
    return sp.csr_matrix((local.ravel(), (R.ravel(), C.ravel())), shape=shape)


def load_vector(mesh: Mesh, f: VectorField, degree: int = 8) -> np.ndarray:
    q = triangle_rule(degree)
    X = mesh.to_physical(q.points)
    T, Q = X.shape[:2]
    fv = np.asarray(f(X.reshape(-1, 2)), dtype=float).reshape(T, Q, 2)
    psi = lagrange(2)(q.points)
    loc = np.einsum("q,tqd,qp->tdp", q.weights, fv, psi) * (2.0 * mesh.areas)[:, None, None]
    return loc.reshape(-1)


def boundary_sides(mesh: Mesh, label: int):
    """Boundary edges with a given label and their owning triangle data."""
    ed = mesh.edges
    e = np.flatnonzero(ed.labels == label)
    t = ed.elements[e, 0]
    j = ed.local_index[e, 0]
    return e, t, j


def edge_bary(j: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Barycentric coordinates (len(j), len(s), 3) of edge points along the
    local edge ``j`` of a triangle, parametrized from its first to its
    second endpoint."""
    out = np.zeros((len(j), len(s), 3))
    rows = np.arange(len(j))
    out[rows, :, LOCAL_EDGES[j, 0]] = 1.0 - s
    out[rows, :, LOCAL_EDGES[j, 1]] = s
    return out


def dirichlet_vector(space: StressSpace, u_D: Optional[VectorField], degree: int = 10) -> np.ndarray:
    """``<u_D, tau nu>`` over the Dirichlet edges."""
    mesh = space.mesh
    rhs = np.zeros(space.n)
    if u_D is None:
        return rhs
    ed = mesh.edges
    e, t, j = boundary_sides(mesh, DIRICHLET)
    if len(e) == 0:
        return rhs
    q = edge_rule(degree)
    bary = edge_bary(j, q.points)
    X = np.einsum("eqi,eix->eqx", bary, mesh.vertices_of[t])
    uv = np.asarray(u_D(X.reshape(-1, 2)), dtype=float).reshape(len(e), len(q.points), 2)
    phi = lagrange(3)(bary) @ space.layout.W.T  # (e, q, a)
    Snu = np.einsum("eajk,ek->eaj", space.layout.S[t], ed.normals[e])
    loc = np.einsum("q,eqj,eaj,eqa->ea", q.weights, uv, Snu, phi) * ed.lengths[e, None]
    np.add.at(rhs, space.local2global[t], loc)
    return rhs


def assemble(
    mesh: Mesh,
    A: Compliance,
    f: Optional[VectorField] = None,
    u_D: Optional[VectorField] = None,
    g: Optional[Callable] = None,
    quad_degree: int = 8,
    edge_degree: int = 10,
    layout: str = "hz",
) -> SaddleSystem:
    """Assemble the saddle-point system; Neumann data are recorded as constraints.

    ``g(points, normals)`` returns the prescribed traction ``sigma nu``; it
    is ignored when the mesh has no Neumann edges.
    """
    dofs = DofMap.build(mesh, layout)
    space = dofs.stress
    l2g = space.local2global
    ul2g = dofs.u_local2global
    M = _scatter_matrix(local_mass(space, A), l2g, l2g, (dofs.n_sigma, dofs.n_sigma))
    B = _scatter_matrix(local_div(space), ul2g, l2g, (dofs.n_u, dofs.n_sigma))
    rhs_u = load_vector(mesh, f, quad_degree) if f is not None else np.zeros(dofs.n_u)
    rhs_s = dirichlet_vector(space, u_D, edge_degree)
    system = SaddleSystem(dofs, A, M, B, rhs_s, rhs_u)
    if np.any(mesh.edges.labels == NEUMANN):
        system = impose_neumann(system, g)
    return system


# ---------------------------------------------------------------------------
# Neumann constraints


def zero_traction(points: np.ndarray, normals: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(points, dtype=float))


def impose_neumann(system: SaddleSystem, g: Optional[Callable], tol: float = 1e-8) -> SaddleSystem:
    """Constrain the stress dofs that control ``sigma nu`` on Neumann edges.

    Edge-node dofs in the (nn, nt) frame are fixed to ``g.nu`` and ``g.t``
    by nodal interpolation.  Vertex values are constrained by one pair of
    rows per adjacent Neumann edge; at a corner between two Neumann edges
    with independent normals the whole matrix value is determined and the
    data are checked for consistency.
    """
    space = system.dofs.stress
    if space.layout_name != "hz":
        raise ValueError("Neumann constraints need the Hu-Zhang layout")
    mesh = space.mesh
    ed = mesh.edges
    V, E = mesh.n_vertices, len(ed)
    n = space.n
    g = zero_traction if g is None else g
    neu = np.flatnonzero(ed.labels == NEUMANN)
    if len(neu) == 0:
        return system

    fixed_idx = []
    fixed_val = []
    a = mesh.coords[ed.vertices[neu, 0]]
    b = mesh.coords[ed.vertices[neu, 1]]
    nu = ed.normals[neu]
    tt = ed.tangents[neu]
    for gnode in range(2):
        s = (gnode + 1) / 3.0
        X = (1 - s) * a + s * b
        gv = np.asarray(g(X, nu), dtype=float)
        base = 3 * V + 4 * neu + 2 * gnode
        fixed_idx += [base, base + 1]
        fixed_val += [np.sum(gv * nu, axis=1), np.sum(gv * tt, axis=1)]

    # vertex rows: sigma(v) nu_e = g(v, nu_e)
    rows_by_vertex: dict[int, list] = {}
    for k, e in enumerate(neu):
        for v in ed.vertices[e]:
            gv = np.asarray(g(mesh.coords[v][None, :], nu[k][None, :]), dtype=float)[0]
            n1, n2 = nu[k]
            rows_by_vertex.setdefault(int(v), []).append(([n1, n2, 0.0], gv[0]))
            rows_by_vertex[int(v)].append(([0.0, n1, n2], gv[1]))

    x0 = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    fi = np.concatenate(fixed_idx)
    x0[fi] = np.concatenate(fixed_val)
    fixed[fi] = True

    partial_cols = []  # (vertex dofs, null basis)
    for v, rows in sorted(rows_by_vertex.items()):
        C = np.array([r[0] for r in rows])
        d = np.array([r[1] for r in rows])
        U, s, Vt = np.linalg.svd(C)
        rank = int(np.sum(s > 1e-10 * s[0]))
        x = np.linalg.lstsq(C, d, rcond=None)[0]
        if np.linalg.norm(C @ x - d) > tol * (1.0 + np.linalg.norm(d)):
            raise ValueError(f"inconsistent Neumann data at corner vertex {v} {tuple(mesh.coords[v])}")
        idx = 3 * v + np.arange(3)
        x0[idx] = x
        fixed[idx] = True
        if rank < 3:
            partial_cols.append((idx, Vt[rank:].T))

    free = np.flatnonzero(~fixed)
    rows = [free]
    cols = [np.arange(len(free))]
    vals = [np.ones(len(free))]
    ncol = len(free)
    for idx, N in partial_cols:
        k = N.shape[1]
        rows.append(np.repeat(idx, k))
        cols.append(np.tile(ncol + np.arange(k), 3))
        vals.append(N.ravel())
        ncol += k
    Tm = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, ncol)
    )
    system.constraints = Constraints(Tm, x0, n - ncol)
    return system


# ---------------------------------------------------------------------------
# solve


def _scaled_solve(K: sp.csr_matrix, b: np.ndarray, n_sigma: int) -> np.ndarray:
    d = np.abs(K.diagonal()[:n_sigma])
    if np.any(d <= 0):
        raise SolverError("stress mass matrix has a non-positive diagonal entry")
    ds = 1.0 / np.sqrt(d)
    Bt = K[n_sigma:, :n_sigma]
    schur = np.asarray((Bt.multiply(Bt)) @ (ds**2)).ravel()
    du = 1.0 / np.sqrt(np.where(schur > 0, schur, 1.0))
    D = sp.diags(np.concatenate([ds, du]))
    Ks = (D @ K @ D).tocsc()
    try:
        lu = spla.splu(Ks, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed ({exc}); order {K.shape[0]}") from exc
    bs = D @ b
    y = lu.solve(bs)
    r = bs - Ks @ y
    y += lu.solve(r)  # one step of iterative refinement
    return D @ y


@dataclass
class Solution:
    """Discrete stress and displacement with evaluators."""

    system: SaddleSystem
    sigma: np.ndarray
    u: np.ndarray
    residual: float = 0.0

    @property
    def mesh(self) -> Mesh:
        return self.system.mesh

    @property
    def space(self) -> StressSpace:
        return self.system.dofs.stress

    @property
    def A(self) -> Compliance:
        return self.system.A

    @property
    def n_dofs(self) -> int:
        return self.system.order

    @cached_property
    def sigma_nodes(self) -> np.ndarray:
        """Nodal matrix values of the cubic stress on each triangle, (T, 10, 2, 2)."""
        lay = self.space.layout
        c = self.sigma[self.space.local2global]
        return np.einsum("ta,an,tajk->tnjk", c, lay.W, lay.S)

    @cached_property
    def u_nodes(self) -> np.ndarray:
        """P2 nodal values per triangle and component, (T, 2, 6)."""
        return self.u.reshape(-1, 2, 6)

    def _sel(self, arr, elements):
        return arr if elements is None else arr[elements]

    def sigma_at(self, bary, elements=None):
        return evaluate(self._sel(self.sigma_nodes, elements), 3, bary)

    def sigma_grad_at(self, bary, elements=None):
        G = self._sel(self.mesh.grad_lambda, elements)
        return evaluate_grad(self._sel(self.sigma_nodes, elements), 3, bary, G)

    def sigma_hess_at(self, bary, elements=None):
        G = self._sel(self.mesh.grad_lambda, elements)
        return evaluate_hess(self._sel(self.sigma_nodes, elements), 3, bary, G)

    def div_sigma_at(self, bary, elements=None):
        d = self.sigma_grad_at(bary, elements)  # (..., i, j, x)
        return np.einsum("...ijj->...i", d)

    def u_at(self, bary, elements=None):
        nodes = np.moveaxis(self._sel(self.u_nodes, elements), 1, 2)  # (T, 6, 2)
        return evaluate(nodes, 2, bary)

    def u_grad_at(self, bary, elements=None):
        nodes = np.moveaxis(self._sel(self.u_nodes, elements), 1, 2)
        G = self._sel(self.mesh.grad_lambda, elements)
        return evaluate_grad(nodes, 2, bary, G)


def _tables(degree, bary, kind):
    L = lagrange(degree)
    bary = np.asarray(bary, dtype=float)
    tab = {0: L, 1: L.d1, 2: L.d2}[kind](bary)
    return tab, bary.ndim == 2


def evaluate(nodes: np.ndarray, degree: int, bary) -> np.ndarray:
    """Evaluate a piecewise Lagrange field with nodal values ``nodes``
    (T, n, ...) at barycentric points (P, 3) or per-triangle points (T, P, 3).
    Returns (T, P, ...)."""
    tab, shared = _tables(degree, bary, 0)
    if shared:
        return np.einsum("pn,tn...->tp...", tab, nodes)
    return np.einsum("tpn,tn...->tp...", tab, nodes)


def evaluate_grad(nodes, degree, bary, grad_lambda) -> np.ndarray:
    """Physical gradient, derivative direction on the last axis."""
    tab, shared = _tables(degree, bary, 1)
    if shared:
        d = np.einsum("pnl,tlx->tpnx", tab, grad_lambda)
    else:
        d = np.einsum("tpnl,tlx->tpnx", tab, grad_lambda)
    return np.einsum("tpnx,tn...->tp...x", d, nodes)


def evaluate_hess(nodes, degree, bary, grad_lambda) -> np.ndarray:
    tab, shared = _tables(degree, bary, 2)
    sub = "pnlm" if shared else "tpnlm"
    d = np.einsum(f"{sub},tlx,tmy->tpnxy", tab, grad_lambda, grad_lambda)
    return np.einsum("tpnxy,tn...->tp...xy", d, nodes)


def _penalty_weight(mesh: Mesh) -> sp.csr_matrix:
    """Block-diagonal weight for the penalty term.

    The inverse reference P2 mass on every triangle: this is the inverse
    physical mass scaled by ``2|K|``, so the penalty scales like the stress
    mass matrix on each element and one penalty parameter suits graded
    meshes as well as uniform ones.
    """
    W = np.linalg.inv(np.kron(np.eye(2), reference_mass(2, 2)))
    T = mesh.n_triangles
    blocks = np.broadcast_to(W, (T, 12, 12))
    idx = np.arange(12 * T).reshape(T, 12)
    return _scatter_matrix(blocks, idx, idx, (12 * T, 12 * T))


def _relative_residual(K, x, b) -> float:
    scale = np.linalg.norm(b) + np.linalg.norm(abs(K) @ np.abs(x))
    return float(np.linalg.norm(K @ x - b) / scale) if scale > 0 else 0.0


def _augmented_lagrangian(K, b, ns, W, rho=1e4, max_iter=60, rtol=1e-15):
    """Iterated penalty for ``K = [[M, B^T], [B, 0]]``.

    Each step solves with the SPD matrix ``M + r B^T W B``, which factors
    with far less fill than the indefinite block matrix.  Returns the
    solution and its relative residual.
    """
    M, B = K[:ns, :ns], K[ns:, :ns]
    b_sigma, b_u = b[:ns], b[ns:]
    P = (B.T @ W @ B).tocsr()
    r = rho * M.diagonal().mean() / max(P.diagonal().mean(), np.finfo(float).tiny)
    Kr = (M + r * P).tocsc()
    d = 1.0 / np.sqrt(Kr.diagonal())
    Ks = (sp.diags(d) @ Kr @ sp.diags(d)).tocsc()
    try:
        lu = spla.splu(Ks, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise SolverError(f"factorization failed ({exc}); order {K.shape[0]}") from exc

    def apply(rhs):
        y = lu.solve(d * rhs)
        y += lu.solve(d * rhs - Ks @ y)
        return d * y

    # correction form: residuals are recomputed each step, so the inner
    # solve error scales with the update rather than with the solution
    sigma = np.zeros(ns)
    u = np.zeros(B.shape[0])
    r2 = b_u.copy()
    best, x_best = np.inf, None
    for _ in range(max_iter):
        r1 = b_sigma - M @ sigma - B.T @ u
        sigma = sigma + apply(r1 + r * (B.T @ (W @ r2)))
        r2 = b_u - B @ sigma
        u = u - r * (W @ r2)
        x = np.concatenate([sigma, u])
        rel = _relative_residual(K, x, b)
        if rel < best:
            best, x_best = rel, x
        elif rel > 0.5 * best and best < 1e-10:
            break  # stagnation at round-off level
        if best <= rtol:
            break
    return x_best, best


def solve(system: SaddleSystem, tol: float = 1e-10, method: str = "al") -> Solution:
    """Sparse solve of the (constrained) saddle-point system.

    ``method="al"`` (default) uses the augmented Lagrangian iteration with
    an SPD factorization; ``"direct"`` factors the indefinite block matrix.
    """
    c = system.constraints
    M, B = system.M, system.B
    b_sigma, b_u = system.rhs_sigma, system.rhs_u
    if c is not None:
        M = (c.T.T @ M @ c.T).tocsr()
        B = (B @ c.T).tocsr()
        b_sigma = c.T.T @ (b_sigma - system.M @ c.x0)
        b_u = b_u - system.B @ c.x0
    ns = M.shape[0]
    K = sp.bmat([[M, B.T], [B, None]], format="csr")
    b = np.concatenate([b_sigma, b_u])
    if method == "al":
        x, rel = _augmented_lagrangian(K, b, ns, _penalty_weight(system.mesh))
        if rel > tol:
            log.info("penalty iteration stalled at %.1e; falling back to direct", rel)
            method = "direct"
    if method == "direct":
        x = _scaled_solve(K, b, ns)
        rel = _relative_residual(K, x, b)
    elif method != "al":
        raise ValueError(f"unknown solver method {method!r}")
    sigma, u = x[:ns], x[ns:]
    if c is not None:
        sigma = c.T @ sigma + c.x0
    if not (np.all(np.isfinite(sigma)) and np.all(np.isfinite(u))):
        raise SolverError(f"non-finite solution on {system.mesh}")
    if rel > tol:
        log.warning("relative residual %.3e exceeds %.1e on %s", rel, tol, system.mesh)
    return Solution(system, sigma, u, rel)

"""Property suites run by ``elastamr self-test`` and the startup checks.

Each suite returns a :class:`Check`; none of them needs more than a few
seconds.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from .adapt import dorfler_mark
from .bench.examples import (
    X,
    Y,
    ExactSolution,
    example1,
    lshape_mesh,
    rotated_lshape_mesh,
    unit_square_mesh,
)
from .elements import Compliance, lagrange, reference_mass
from .estimator import edge_jumps, estimate
from .mesh import INTERIOR, NEUMANN, Mesh, bisect, uniform_refine
from .postprocess import complement_basis, postprocess_displacement
from .quadrature import edge_rule, triangle_rule
from .system import (
    Solution,
    StressSpace,
    _scatter_matrix,
    assemble,
    edge_bary,
    load_vector,
    local_mass,
    solve,
)


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


# ---------------------------------------------------------------------------
# test meshes


def jittered_square(n_refine: int = 2, amount: float = 0.15, seed: int = 0) -> Mesh:
    """Refined unit square with interior vertices moved at random."""
    m = uniform_refine(unit_square_mesh(), n_refine)
    rng = np.random.default_rng(seed)
    h = m.h
    c = m.coords.copy()
    inner = np.ones(len(c), dtype=bool)
    inner[m.boundary_edges.ravel()] = False
    c[inner] += amount * h * rng.uniform(-1, 1, (inner.sum(), 2))
    return Mesh(c, m.elements, m.boundary_edges, m.boundary_labels)


def sample_meshes() -> List[Mesh]:
    rng = np.random.default_rng(1)
    sq = uniform_refine(unit_square_mesh(), 1)
    graded = bisect(sq, rng.choice(sq.n_triangles, 3, replace=False))
    return [
        unit_square_mesh(),
        jittered_square(2),
        lshape_mesh(),
        uniform_refine(rotated_lshape_mesh(), 1),
        bisect(graded, [0, graded.n_triangles - 1]),
    ]


def polynomial_solution(mesh_factory=None, A=None) -> ExactSolution:
    """Quartic displacement: its stress is cubic, hence in the discrete space."""
    u = [X**4 - 2 * X * Y**3 + X**2 * Y + 1, X**3 * Y - Y**4 + 3 * X * Y**2 - Y]
    return ExactSolution.from_expression(
        "quartic", u, A or Compliance(3.0, 1.5), mesh_factory or jittered_square
    )


# ---------------------------------------------------------------------------
# suites


def check_dimension(layout: str = "hz") -> Check:
    """Global stress dimension and SPD mass matrix on the sample meshes."""
    A = Compliance(1.0, 1.0)
    worst = np.inf
    bad = []
    for m in sample_meshes():
        space = StressSpace(m, layout)
        V, E, T = m.n_vertices, m.n_edges, m.n_triangles
        expected = 3 * V + (4 if layout == "hz" else 6) * E + 9 * T
        l2g = space.local2global
        M = _scatter_matrix(local_mass(space, A), l2g, l2g, (space.n, space.n))
        ev = np.linalg.eigvalsh(M.toarray())
        rel = ev[0] / ev[-1]
        worst = min(worst, rel)
        if space.n != expected or rel <= 1e-13:
            bad.append(f"{m!r}: n={space.n} (expected {expected}), lambda_min/lambda_max={rel:.1e}")
    if bad:
        return Check(f"dimension [{layout}]", False, "; ".join(bad))
    return Check(f"dimension [{layout}]", True, f"5 meshes, min eigenvalue ratio {worst:.2e}")


def check_normal_continuity() -> Check:
    """sigma nu agrees from both sides of every interior edge for random dofs."""
    m = jittered_square(2)
    sys_ = assemble(m, Compliance(1.0, 1.0))
    rng = np.random.default_rng(2)
    sol = Solution(sys_, rng.standard_normal(sys_.n_sigma), np.zeros(sys_.n_u))
    ed = m.edges
    inner = np.flatnonzero(ed.labels == INTERIOR)
    s = edge_rule(8).points
    Sp = sol.sigma_at(edge_bary(ed.local_index[inner, 0], s), ed.elements[inner, 0])
    Sm = sol.sigma_at(edge_bary(ed.local_index[inner, 1], 1.0 - s), ed.elements[inner, 1])
    nu = ed.normals[inner]
    jump = np.einsum("eqij,ej->eqi", Sp - Sm, nu)
    scale = np.abs(Sp).max()
    err = np.abs(jump).max() / scale
    return Check("normal continuity", err <= 1e-11, f"max |[sigma nu]| / max|sigma| = {err:.1e}")


def check_divergence() -> Check:
    """div sigma_h equals the elementwise P2 projection of f."""
    ex = example1()
    m = uniform_refine(ex.initial_mesh(), 2)
    sol = solve(assemble(m, ex.A, ex.f, ex.dirichlet, None))
    T = m.n_triangles
    # same rule as the assembly, so Q_h f is the discrete projection
    rhs = load_vector(m, ex.f, 8).reshape(T, 2, 6)
    Mref = reference_mass(2, 2)
    coef = np.linalg.solve(Mref, np.moveaxis(rhs, 1, 2) / (2.0 * m.areas)[:, None, None])
    q = triangle_rule(6)
    Qf = np.einsum("qn,tnd->tqd", lagrange(2)(q.points), coef)
    div = sol.div_sigma_at(q.points)
    err = np.abs(div - Qf).max() / np.abs(Qf).max()
    return Check("div sigma_h = Q_h f", err <= 1e-9, f"relative max error {err:.1e}")


def check_exactness() -> Check:
    """Cubic stresses are reproduced, with Dirichlet and with Neumann data."""
    out = []
    ok = True
    for label, factory in (("dirichlet", jittered_square), ("mixed", rotated_lshape_mesh)):
        ex = polynomial_solution(factory)
        m = uniform_refine(factory(), 1)
        sol = solve(assemble(m, ex.A, ex.f, ex.dirichlet, ex.g))
        q = triangle_rule(6)
        S = ex.sigma(m.to_physical(q.points).reshape(-1, 2)).reshape(m.n_triangles, -1, 2, 2)
        err = np.abs(sol.sigma_at(q.points) - S).max() / np.abs(S).max()
        ok &= err <= 1e-9
        out.append(f"{label} {err:.1e}")
    return Check("polynomial exactness", bool(ok), ", ".join(out))


def check_interior_jumps() -> Check:
    """Estimator jumps vanish on interior edges when sigma_h is smooth."""
    ex = polynomial_solution()
    m = uniform_refine(ex.initial_mesh(), 1)
    sol = solve(assemble(m, ex.A, ex.f, ex.dirichlet, None))
    j1, j2 = edge_jumps(sol, ex.dirichlet)
    inner = m.edges.labels == INTERIOR
    err = max(np.sqrt(j1[inner]).max(), np.sqrt(j2[inner]).max())
    bnd = max(np.sqrt(j1[~inner]).max(), np.sqrt(j2[~inner]).max())
    return Check(
        "interior jumps vanish",
        err <= 1e-8 and bnd <= 1e-8,
        f"interior {err:.1e}, boundary {bnd:.1e}",
    )


def brute_force_mark(values, theta: float) -> int:
    v = np.asarray(values, dtype=float)
    target = theta * v.sum()
    for k in range(1, len(v) + 1):
        for c in itertools.combinations(range(len(v)), k):
            if v[list(c)].sum() >= target:
                return k
    return len(v)


def check_dorfler(trials: int = 200) -> Check:
    rng = np.random.default_rng(3)
    for _ in range(trials):
        n = int(rng.integers(1, 13))
        v = rng.exponential(size=n)
        if rng.random() < 0.3:  # exercise ties
            v = np.round(v, 1) + 0.1
        theta = float(rng.uniform(0.05, 0.95))
        got = dorfler_mark(v, theta)
        if len(got) != brute_force_mark(v, theta) or v[got].sum() < theta * v.sum():
            return Check("doerfler minimality", False, f"values {v}, theta {theta}")
    return Check("doerfler minimality", True, f"{trials} random cases")


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _hanging_vertices(m: Mesh) -> int:
    ed = m.edges
    a, b = m.coords[ed.vertices[:, 0]], m.coords[ed.vertices[:, 1]]
    count = 0
    for p in m.coords:
        d = b - a
        s = np.einsum("ex,ex->e", p - a, d) / np.einsum("ex,ex->e", d, d)
        off = np.abs(_cross(d, p - a)) / np.linalg.norm(d, axis=1)
        count += int(np.sum((s > 1e-9) & (s < 1 - 1e-9) & (off < 1e-12)))
    return count


def _on_segment(p, a, b) -> bool:
    d = b - a
    s = np.dot(p - a, d) / np.dot(d, d)
    return -1e-12 <= s <= 1 + 1e-12 and abs(_cross(d, p - a)) <= 1e-12 * np.linalg.norm(d)


def check_refinement(rounds: int = 6) -> Check:
    """Newest vertex bisection: conformity, area halving, label inheritance."""
    root = rotated_lshape_mesh()
    root_areas = root.areas
    rng = np.random.default_rng(4)
    m = root
    for _ in range(rounds):
        k = max(1, m.n_triangles // 5)
        m = bisect(m, rng.choice(m.n_triangles, k, replace=False))
    problems = []
    if _hanging_vertices(m):
        problems.append("hanging vertices")
    if not np.isclose(m.areas.sum(), root_areas.sum(), rtol=1e-13):
        problems.append("area not preserved")
    scaled = m.areas * 2.0 ** m.generation
    if not np.all(np.min(np.abs(scaled[:, None] - root_areas[None, :]), axis=1) <= 1e-12):
        problems.append("child area is not parent area / 2^generation")
    for (va, vb), lab in zip(m.boundary_edges, m.boundary_labels):
        p = 0.5 * (m.coords[va] + m.coords[vb])
        owners = [
            l
            for (ra, rb), l in zip(root.boundary_edges, root.boundary_labels)
            if _on_segment(p, root.coords[ra], root.coords[rb])
        ]
        if owners != [lab]:
            problems.append("boundary label not inherited")
            break
    ok = not problems
    return Check(
        "bisection",
        ok,
        f"{m.n_triangles} triangles after {rounds} rounds" if ok else ", ".join(problems),
    )


def check_postprocess() -> Check:
    """u* keeps the P2 moments of u_h and matches eps(u*) to A sigma_h on the complement."""
    ex = example1()
    m = uniform_refine(ex.initial_mesh(), 2)
    sol = solve(assemble(m, ex.A, ex.f, ex.dirichlet, None))
    post = postprocess_displacement(sol)
    q = triangle_rule(10)
    w = q.weights[None, :] * (2.0 * m.areas)[:, None]
    psi = lagrange(2)(q.points)
    moments = np.einsum("tq,tqd,qn->tdn", w, post.at(q.points) - sol.u_at(q.points), psi)
    scale = np.einsum("tq,tqd,qn->tdn", w, np.abs(sol.u_at(q.points)), np.abs(psi)).max()
    r1 = np.abs(moments).max() / scale

    Z = complement_basis()
    dz = np.einsum("qnl,na->qal", lagrange(4).d1(q.points), Z)
    gz = np.einsum("qal,tlx->tqax", dz, m.grad_lambda)
    G = post.grad_at(q.points)
    mismatch = 0.5 * (G + np.swapaxes(G, -1, -2)) - sol.A.apply(sol.sigma_at(q.points))
    # (mismatch, eps(z e_d)) = (mismatch[d, :], grad z) by symmetry
    res = np.einsum("tq,tqdx,tqax->tad", w, mismatch, gz)
    ref = np.einsum("tq,tqdx,tqax->tad", w, np.abs(mismatch) + np.abs(G), np.abs(gz)).max()
    r2 = np.abs(res).max() / ref
    ok = r1 <= 1e-11 and r2 <= 1e-11
    return Check("postprocessing residuals", ok, f"moments {r1:.1e}, gradient {r2:.1e}")


def check_quadrature_independence() -> Check:
    ex = example1()
    m = uniform_refine(ex.initial_mesh(), 2)
    sol = solve(assemble(m, ex.A, ex.f, ex.dirichlet, None))
    a = estimate(sol, ex.dirichlet, 8, 10).total
    b = estimate(sol, ex.dirichlet, 12, 16).total
    rel = abs(a - b) / b
    return Check("estimator quadrature independence", rel <= 1e-12, f"relative change {rel:.1e}")


SUITES: Dict[str, Callable[[], Check]] = {
    "dimension": check_dimension,
    "continuity": check_normal_continuity,
    "divergence": check_divergence,
    "exactness": check_exactness,
    "jumps": check_interior_jumps,
    "dorfler": check_dorfler,
    "refinement": check_refinement,
    "postprocess": check_postprocess,
    "quadrature": check_quadrature_independence,
}


def run_suites(names=None) -> List[Check]:
    out = []
    for name in names or SUITES:
        t = time.perf_counter()
        try:
            c = SUITES[name]()
        except Exception as exc:  # report, don't abort the remaining suites
            c = Check(name, False, f"{type(exc).__name__}: {exc}")
        c.seconds = time.perf_counter() - t
        out.append(c)
    return out


# ---------------------------------------------------------------------------
# startup checks


def startup_spd(mesh: Mesh, A: Compliance) -> Check:
    """Cheap SPD test of the stress mass matrix: every local matrix is SPD
    and the global dimension matches the Hu-Zhang count."""
    space = StressSpace(mesh)
    loc = local_mass(space, A)
    ev = np.linalg.eigvalsh(loc)
    rel = float((ev[:, 0] / ev[:, -1]).min())
    n_ok = space.n == 3 * mesh.n_vertices + 4 * mesh.n_edges + 9 * mesh.n_triangles
    return Check("stress mass SPD", n_ok and rel > 1e-13, f"n={space.n}, min local ratio {rel:.1e}")


def startup_geometry(mesh: Mesh, omega: float) -> Check:
    """The Neumann edges at the origin lie on x^2 = y^2 and the interior
    angle there is 2 omega."""
    ed = mesh.edges
    neu = np.flatnonzero(ed.labels == NEUMANN)
    P = mesh.coords[ed.vertices[neu]].reshape(-1, 2)
    on_rays = bool(len(neu)) and np.allclose(P[:, 0] ** 2, P[:, 1] ** 2, atol=1e-12)
    o = np.flatnonzero(np.linalg.norm(mesh.coords, axis=1) < 1e-14)
    if len(o) != 1:
        return Check("corner geometry", False, "no vertex at the origin")
    t, j = np.nonzero(mesh.elements == o[0])
    ang = float(mesh.angles[t, j].sum())
    ok = on_rays and abs(ang - 2 * omega) < 1e-12
    return Check("corner geometry", ok, f"angle {ang:.15f}, Neumann on x^2=y^2: {on_rays}")


def generating_layout_report() -> Check:
    """The 36-function generating set on the sample meshes (dependent)."""
    return check_dimension("generating")


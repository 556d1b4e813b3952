"""Benchmark problems with known solutions.

Exact displacements are written symbolically; gradients, Hessians, the
stress ``C eps(u)`` and the load ``f = div sigma`` are derived by sympy and
compiled to vectorized numpy functions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import sympy as sp
from scipy.optimize import brentq

from ..elements import Compliance
from ..mesh import Mesh
from ..system import zero_traction

X, Y = sp.symbols("x y", real=True)


def _compile(exprs, shape):
    flat = list(sp.Matrix(exprs).reshape(int(np.prod(shape)), 1)) if shape else [exprs]
    fn = sp.lambdify((X, Y), flat, modules="numpy", cse=True)

    def evaluate(points):
        P = np.asarray(points, dtype=float).reshape(-1, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = fn(P[:, 0], P[:, 1])
        out = np.empty((len(P), len(flat)))
        for k, v in enumerate(vals):
            out[:, k] = v
        return out.reshape((len(P),) + tuple(shape))

    return evaluate


@dataclass
class ExactSolution:
    """Exact displacement with derived data on a fixed domain.

    ``grad_u(x)[i, j] = d u_i / d x_j``, ``hess_u(x)[i, j, k] = d^2 u_i / dx_j dx_k``.
    ``f`` is the load in the convention ``div sigma = f``.
    """

    name: str
    A: Compliance
    u: Callable
    grad_u: Callable
    hess_u: Callable
    sigma: Callable
    f: Callable
    initial_mesh: Callable[[], Mesh]
    singular_point: Optional[np.ndarray] = None
    traction: Optional[Callable] = None

    @classmethod
    def from_expression(cls, name, u_expr, A: Compliance, initial_mesh, singular_point=None):
        u = sp.Matrix(u_expr)
        J = u.jacobian([X, Y])
        H = [[[sp.diff(J[i, j], v) for v in (X, Y)] for j in range(2)] for i in range(2)]
        eps = (J + J.T) / 2
        tr = eps[0, 0] + eps[1, 1]
        sig = 2 * A.mu * eps + A.lam * tr * sp.eye(2)
        div = sp.Matrix(
            [sp.diff(sig[i, 0], X) + sp.diff(sig[i, 1], Y) for i in range(2)]
        )
        return cls(
            name,
            A,
            _compile(u, (2,)),
            _compile(J, (2, 2)),
            _compile(sp.Array(H).reshape(8, 1).tomatrix(), (2, 2, 2)),
            _compile(sig, (2, 2)),
            _compile(div, (2,)),
            initial_mesh,
            None if singular_point is None else np.asarray(singular_point, dtype=float),
        )

    # boundary data -------------------------------------------------------

    def u_D(self, points):
        return self.u(points)

    def g(self, points, normals):
        """Traction ``sigma nu`` (or the known closed form when one is set)."""
        if self.traction is not None:
            return self.traction(points, normals)
        return np.einsum("nij,nj->ni", self.sigma(points), np.asarray(normals, dtype=float))

    @property
    def dirichlet(self) -> "BoundaryDatum":
        return BoundaryDatum(self.u, self.grad_u, self.hess_u)


@dataclass(frozen=True)
class BoundaryDatum:
    """Displacement datum with first and second derivatives."""

    value: Callable
    grad: Callable
    hess: Callable

    def __call__(self, points):
        return self.value(points)


# ---------------------------------------------------------------------------
# meshes


def unit_square_mesh(label: str = "dirichlet") -> Mesh:
    return Mesh(
        [[0, 0], [1, 0], [1, 1], [0, 1]],
        [[0, 1, 2], [0, 2, 3]],
        [[0, 1], [1, 2], [2, 3], [3, 0]],
        [label] * 4,
    )


def lshape_mesh() -> Mesh:
    """(-1,1)^2 minus [0,1)x(-1,0]: two triangles per unit square, the
    diagonals meeting at the re-entrant corner."""
    pts = [[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [0, 1], [-1, 1], [-1, 0]]
    tris = [[0, 1, 2], [0, 2, 7], [7, 2, 6], [2, 5, 6], [2, 3, 4], [2, 4, 5]]
    bnd = [[i, (i + 1) % 8] for i in range(8)]
    return Mesh(pts, tris, bnd, ["dirichlet"] * 8)


def rotated_lshape_mesh() -> Mesh:
    """Polygon (0,0), (-1,-1), (1,-1), (1,1), (-1,1) as a six-triangle fan
    around the re-entrant corner; Neumann on the two rays x^2 = y^2."""
    pts = [[0, 0], [-1, -1], [0, -1], [1, -1], [1, 0], [1, 1], [0, 1], [-1, 1]]
    tris = [[0, k, k + 1] for k in range(1, 7)]
    bnd = [[0, 1]] + [[k, k + 1] for k in range(1, 7)] + [[7, 0]]
    labels = ["neumann"] + ["dirichlet"] * 6 + ["neumann"]
    return Mesh(pts, tris, bnd, labels)


# ---------------------------------------------------------------------------
# roots


def _first_root(F, lo, hi, n=4000):
    z = np.linspace(lo, hi, n)
    v = F(z)
    k = np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)
    if len(k) == 0:
        raise ValueError("no sign change in the search interval")
    return brentq(F, z[k[0]], z[k[0] + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_z(lam: float, mu: float) -> float:
    """Smallest root in (0, 1) of (lam+3mu)^2 sin^2(z w) = (lam+mu)^2 z^2 sin^2 w, w = 3pi/2."""
    if not (lam >= 0 and mu > 0):
        raise ValueError("invalid Lame parameters")
    w = 1.5 * np.pi
    a, b = (lam + 3 * mu) ** 2, (lam + mu) ** 2 * np.sin(w) ** 2

    def F(z):
        return a * np.sin(z * w) ** 2 - b * z**2

    z = _first_root(F, 1e-3, 1.0 - 1e-9)
    for _ in range(3):
        dF = 2 * a * np.sin(z * w) * np.cos(z * w) * w - 2 * b * z
        z -= F(z) / dF
    if abs(F(z)) > 1e-12 * a:
        raise ArithmeticError("root residual too large")
    return float(z)


def find_alpha(omega: float = 0.75 * np.pi) -> float:
    """Positive root of alpha sin(2w) + sin(2 w alpha) = 0."""

    def F(a):
        return a * np.sin(2 * omega) + np.sin(2 * omega * a)

    a = _first_root(F, 1e-3, 1.0)
    for _ in range(3):
        a -= F(a) / (np.sin(2 * omega) + 2 * omega * np.cos(2 * omega * a))
    return float(a)


# ---------------------------------------------------------------------------
# examples


def example1(lam: float = 10.0, mu: float = 1.0) -> ExactSolution:
    """Smooth divergence-free solution on the unit square, u = 0 on the boundary."""
    pi = sp.pi
    u = [
        pi / 2 * sp.sin(pi * X) ** 2 * sp.sin(2 * pi * Y),
        -pi / 2 * sp.sin(pi * Y) ** 2 * sp.sin(2 * pi * X),
    ]
    return ExactSolution.from_expression("example1", u, Compliance(lam, mu), unit_square_mesh)


def example1_printed_load(points) -> np.ndarray:
    """The load as tabulated for mu = 1; it equals ``-div sigma``."""
    P = np.asarray(points, dtype=float)
    x, y = P[:, 0], P[:, 1]
    c = np.pi**3
    return np.column_stack(
        [
            -c * np.sin(2 * np.pi * y) * (2 * np.cos(2 * np.pi * x) - 1),
            c * np.sin(2 * np.pi * x) * (2 * np.cos(2 * np.pi * y) - 1),
        ]
    )


def example2(lam: float = 10.0, mu: float = 1.0) -> ExactSolution:
    """Corner singularity on the L-shaped domain."""
    A = Compliance(lam, mu)
    z = find_z(lam, mu)
    w = 1.5 * np.pi
    L = lam + mu
    r = sp.sqrt(X**2 + Y**2)
    th = sp.atan2(-Y, -X) + sp.pi  # in (0, 2pi], cut along the edge y = 0, x > 0
    P1 = sp.Matrix(
        [
            ((z + 2) * L + 4 * mu) * sp.sin(z * th) - z * L * sp.sin((z - 2) * th),
            z * L * (sp.cos(z * th) - sp.cos((z - 2) * th)),
        ]
    )
    P2 = sp.Matrix(
        [
            z * L * (sp.cos((z - 2) * th) - sp.cos(z * th)),
            -((2 - z) * L + 4 * mu) * sp.sin(z * th) - z * L * sp.sin((z - 2) * th),
        ]
    )
    a = z * L * np.sin((z - 2) * w) + ((2 - z) * L + 4 * mu) * np.sin(z * w)
    b = z * L * (np.cos((z - 2) * w) - np.cos(z * w))
    Phi = a * P1 - b * P2
    cut = (r**2 * sp.cos(th) ** 2 - 1) * (r**2 * sp.sin(th) ** 2 - 1)
    u = cut * r**z * Phi / L**2
    ex = ExactSolution.from_expression("example2", u, A, lshape_mesh, singular_point=(0.0, 0.0))
    ex.z = z
    return ex


def example3(E: float = 1e5, nu: float = 0.4999) -> ExactSolution:
    """Mixed boundary conditions on the rotated L-shaped domain."""
    A = Compliance.from_young_poisson(E, nu)
    lam, mu = A.lam, A.mu
    w = 0.75 * np.pi
    alpha = find_alpha(w)
    C1 = -np.cos((alpha + 1) * w) / np.cos((alpha - 1) * w)
    # positive sign: only then are f = 0 and the traction on the rays zero
    C2 = 2 * (lam + 2 * mu) / (lam + mu)
    r = sp.sqrt(X**2 + Y**2)
    th = sp.atan2(Y, X)
    ur = r**alpha / (2 * mu) * (
        -(alpha + 1) * sp.cos((alpha + 1) * th) + (C2 - alpha - 1) * C1 * sp.cos((alpha - 1) * th)
    )
    ut = r**alpha / (2 * mu) * (
        (alpha + 1) * sp.sin((alpha + 1) * th) + (C2 + alpha - 1) * C1 * sp.sin((alpha - 1) * th)
    )
    u = [ur * sp.cos(th) - ut * sp.sin(th), ur * sp.sin(th) + ut * sp.cos(th)]
    ex = ExactSolution.from_expression("example3", u, A, rotated_lshape_mesh, singular_point=(0.0, 0.0))
    ex.alpha, ex.C1, ex.C2 = alpha, C1, C2
    # exact zero; sigma itself is singular at the corner vertex on the rays
    ex.traction = zero_traction
    return ex


def get_example(number: int, lam=None, mu=None, E=None, nu=None) -> ExactSolution:
    if number == 1:
        return example1(10.0 if lam is None else lam, 1.0 if mu is None else mu)
    if number == 2:
        return example2(10.0 if lam is None else lam, 1.0 if mu is None else mu)
    if number == 3:
        return example3(1e5 if E is None else E, 0.4999 if nu is None else nu)
    raise ValueError(f"unknown example {number}")

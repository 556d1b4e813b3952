"""Doerfler marking and the SOLVE -> ESTIMATE -> MARK -> REFINE loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from .elements import Compliance
from .estimator import estimate, oscillations
from .mesh import Mesh, bisect
from .postprocess import indicator_Aeps, postprocess_displacement
from .system import Solution, assemble, solve

log = logging.getLogger(__name__)


class MarkingError(ValueError):
    pass


def dorfler_mark(values, theta: float) -> np.ndarray:
    """Smallest set of ids whose values sum to at least ``theta * sum(values)``.

    Values are taken in descending order, ties by ascending id.  Returns the
    marked ids in ascending order.
    """
    v = np.asarray(values, dtype=float)
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie in (0, 1)")
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("expected a non-empty 1-d array")
    if not np.all(np.isfinite(v)) or np.any(v < 0):
        raise ValueError("indicators must be finite and non-negative")
    ids = np.arange(len(v))
    order = np.lexsort((ids, -v))
    csum = np.cumsum(v[order])
    total = csum[-1]
    if total <= 0.0:
        raise MarkingError("all indicators vanish")
    n = int(np.searchsorted(csum, theta * total, side="left")) + 1
    return np.sort(order[: min(n, len(v))])


@dataclass(frozen=True)
class AdaptConfig:
    theta: float = 0.2
    max_dofs: Optional[int] = 200_000
    max_iterations: Optional[int] = None
    eta_tolerance: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")
        if self.max_dofs is None and self.max_iterations is None and self.eta_tolerance is None:
            raise ValueError("at least one stop criterion is required")


@dataclass
class Problem:
    """Mesh, material and data of an elasticity problem.

    ``u_D`` may carry ``grad`` and ``hess`` for the boundary terms of the
    estimator; ``exact`` (optional) enables error norms.
    """

    mesh: Mesh
    A: Compliance
    f: Optional[Callable] = None
    u_D: Optional[Callable] = None
    g: Optional[Callable] = None
    exact: Optional[object] = None

    @classmethod
    def from_exact(cls, exact, mesh: Optional[Mesh] = None) -> "Problem":
        return cls(
            mesh if mesh is not None else exact.initial_mesh(),
            exact.A,
            exact.f,
            exact.dirichlet,
            exact.g,
            exact,
        )


@dataclass
class LoopRecord:
    iteration: int
    n_dofs: int
    n_triangles: int
    eta: float
    errA: Optional[float] = None
    err_grad: Optional[float] = None
    err_Aeps: Optional[float] = None
    osc_f: Optional[float] = None
    h_min: float = 0.0
    h_max: float = 0.0
    n_marked: int = 0

    def as_dict(self):
        return asdict(self)


class History(list):
    """List of ``LoopRecord`` with the final mesh and solution attached."""

    mesh: Optional[Mesh] = None
    solution: Optional[Solution] = None


@dataclass
class Step:
    solution: Solution
    indicators: object
    record: LoopRecord


def solve_and_estimate(problem: Problem, mesh: Mesh, iteration: int = 0,
                       quad_degree: int = 8, edge_degree: int = 10, errors: bool = True,
                       error_degree: int = 14) -> Step:
    """Assemble, solve and estimate on ``mesh``.

    Errors against ``problem.exact`` use their own, higher, quadrature
    degree: the integrands are not polynomial and degree 8 is visibly
    inexact on the coarsest meshes.
    """
    from .bench.norms import error_norms  # local: bench depends on this module

    system = assemble(mesh, problem.A, problem.f, problem.u_D, problem.g, quad_degree, edge_degree)
    sol = solve(system)
    u_D = problem.u_D if hasattr(problem.u_D, "grad") else None
    ind = estimate(sol, u_D, quad_degree, edge_degree)
    rec = LoopRecord(iteration, sol.n_dofs, mesh.n_triangles, ind.total,
                     h_min=float(mesh.diameters.min()), h_max=float(mesh.diameters.max()))
    if problem.f is not None:
        rec.osc_f = float(np.sqrt(oscillations(sol, problem.f, degree=quad_degree).f_sq))
    if errors and problem.exact is not None:
        post = postprocess_displacement(sol, quad_degree)
        en = error_norms(sol, problem.exact, post, degree=error_degree)
        rec.errA, rec.err_grad = en.errA, en.err_grad
        rec.err_Aeps = indicator_Aeps(sol, post, quad_degree)
    return Step(sol, ind, rec)


def format_progress(rec: LoopRecord) -> str:
    err = "n/a" if rec.errA is None else f"{rec.errA:.4e}"
    return f"iter {rec.iteration}: dofs={rec.n_dofs}, eta={rec.eta:.4e}, errA={err}"


def adaptive_loop(
    problem: Problem,
    config: AdaptConfig,
    progress: Optional[Callable[[LoopRecord], None]] = None,
    quad_degree: int = 8,
    edge_degree: int = 10,
) -> History:
    """Run the adaptive algorithm until a stop criterion fires.

    Errors raised by the solver or the mesh module propagate; the partial
    history is attached to the exception as ``history``.
    """
    history = History()
    mesh = problem.mesh
    m = 0
    while True:
        try:
            step = solve_and_estimate(problem, mesh, m, quad_degree, edge_degree)
        except Exception as exc:
            exc.history = history
            raise
        rec = step.record
        history.append(rec)
        history.mesh, history.solution = mesh, step.solution
        if progress is not None:
            progress(rec)

        if config.eta_tolerance is not None and rec.eta <= config.eta_tolerance:
            break
        if config.max_iterations is not None and m + 1 >= config.max_iterations:
            break
        if config.max_dofs is not None and rec.n_dofs >= config.max_dofs:
            break
        try:
            marked = dorfler_mark(step.indicators.eta_elem_sq, config.theta)
        except MarkingError:
            log.info("indicators vanish; stopping")
            break
        rec.n_marked = len(marked)
        mesh = bisect(mesh, marked)
        m += 1
    return history

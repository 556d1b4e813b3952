"""Uniform and adaptive convergence studies with CSV output."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from ..adapt import AdaptConfig, LoopRecord, Problem, adaptive_loop, solve_and_estimate
from ..mesh import Mesh, uniform_refine
from .norms import eoc

CSV_COLUMNS = (
    "level",
    "h_or_dofs",
    "err_sigma_A",
    "order_sigma",
    "err_grad_upost",
    "order_u",
    "eta",
    "order_eta",
    "err_Aeps",
    "order_Aeps",
    "osc_f",
)


@dataclass
class StudyConfig:
    example: int = 1
    lam: Optional[float] = None
    mu: Optional[float] = None
    E: Optional[float] = None
    nu: Optional[float] = None
    k: int = 3
    levels: int = 4
    adapt: Optional[AdaptConfig] = None
    quad_degree: int = 8
    edge_degree: int = 10
    out: Optional[str] = None

    def __post_init__(self):
        if self.k != 3:
            raise ValueError("only k = 3 is implemented")
        for name in ("mu", "E"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.levels < 1:
            raise ValueError("levels must be positive")


@dataclass
class StudyRow:
    level: int
    h_or_dofs: float
    record: LoopRecord


@dataclass
class StudyResult:
    rows: List[StudyRow] = field(default_factory=list)
    mode: str = "uniform"

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r.record, name) for r in self.rows], dtype=float)

    def orders(self, name: str) -> np.ndarray:
        vals = self.column(name)
        if len(vals) < 2 or np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            return np.full(len(vals), np.nan)
        if self.mode == "uniform":
            return eoc(vals, "uniform")
        # per-iteration slope against dofs, as a rate in h-units is undefined here
        n = np.array([r.h_or_dofs for r in self.rows])
        out = np.full(len(vals), np.nan)
        out[1:] = np.log(vals[1:] / vals[:-1]) / np.log(n[1:] / n[:-1])
        return out

    def table(self) -> List[dict]:
        o = {k: self.orders(k) for k in ("errA", "err_grad", "eta", "err_Aeps")}
        rows = []
        for i, r in enumerate(self.rows):
            rec = r.record
            rows.append(
                dict(
                    level=r.level,
                    h_or_dofs=r.h_or_dofs,
                    err_sigma_A=rec.errA,
                    order_sigma=o["errA"][i],
                    err_grad_upost=rec.err_grad,
                    order_u=o["err_grad"][i],
                    eta=rec.eta,
                    order_eta=o["eta"][i],
                    err_Aeps=rec.err_Aeps,
                    order_Aeps=o["err_Aeps"][i],
                    osc_f=rec.osc_f,
                )
            )
        return rows

    def write_csv(self, target) -> None:
        """Write to a path or an open text stream."""
        if hasattr(target, "write"):
            self._write(target)
        else:
            with open(target, "w", newline="") as fh:
                self._write(fh)

    def _write(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.table():
            w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return ""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return f"{v:.6e}"


def spacing(mesh: Mesh) -> float:
    """Nominal grid spacing: the median edge length."""
    return float(np.median(mesh.edges.lengths))


def run_uniform(
    exact,
    levels: int,
    mesh: Optional[Mesh] = None,
    quad_degree: int = 8,
    edge_degree: int = 10,
    progress: Optional[Callable[[StudyRow], None]] = None,
) -> StudyResult:
    """Refine the initial mesh uniformly; row ``l`` has spacing ``h0 2^-l``."""
    problem = Problem.from_exact(exact, mesh)
    m = problem.mesh
    h0 = spacing(m)
    result = StudyResult(mode="uniform")
    for level in range(1, levels + 1):
        m = uniform_refine(m)
        step = solve_and_estimate(problem, m, level, quad_degree, edge_degree)
        row = StudyRow(level, h0 * 2.0**-level, step.record)
        result.rows.append(row)
        if progress is not None:
            progress(row)
    return result


def run_adaptive(
    exact,
    config: AdaptConfig,
    mesh: Optional[Mesh] = None,
    quad_degree: int = 8,
    edge_degree: int = 10,
    progress: Optional[Callable[[LoopRecord], None]] = None,
) -> StudyResult:
    problem = Problem.from_exact(exact, mesh)
    history = adaptive_loop(problem, config, progress, quad_degree, edge_degree)
    result = StudyResult(mode="dofs")
    result.rows = [StudyRow(r.iteration, r.n_dofs, r) for r in history]
    result.history = history
    return result


def tail_slope(result: StudyResult, name: str) -> float:
    """Least-squares slope of ``log value`` against ``log dofs`` over the last half."""
    dofs = [r.record.n_dofs for r in result.rows]
    return float(eoc(result.column(name), "dofs", dofs)[0])

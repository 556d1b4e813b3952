"""Command-line front end: ``elastamr {run-uniform,run-adaptive,mesh-info,self-test}``."""
from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .adapt import AdaptConfig, format_progress
from .bench.examples import get_example
from .bench.study import run_adaptive, run_uniform, tail_slope
from .mesh import LABELS, MeshError, load_mesh
from .plot import loglog_svg
from .selftest import SUITES, run_suites, startup_geometry, startup_spd
from .system import SolverError, StressSpace

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _common(p: argparse.ArgumentParser, with_material: bool = True) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--example", type=int, choices=(1, 2, 3), default=None)
    src.add_argument("--mesh", type=Path, help="mesh file (replaces the example's initial mesh)")
    if with_material:
        p.add_argument("--lambda", dest="lam", type=float, help="Lame lambda (examples 1, 2)")
        p.add_argument("--mu", type=float, help="Lame mu (examples 1, 2)")
        p.add_argument("--E", dest="E", type=float, help="Young's modulus (example 3)")
        p.add_argument("--nu", type=float, help="Poisson ratio (example 3)")
        p.add_argument("--quad-degree", type=int, default=8)
        p.add_argument("--edge-quad-degree", type=int, default=10)
        p.add_argument("--out", type=Path, help="CSV path (default: stdout)")
        p.add_argument("--plot", action="store_true", help="also write an SVG next to --out")
        p.add_argument("-q", "--quiet", action="store_true", help="no progress lines")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="elastamr", description="Adaptive mixed FEM for planar elasticity.")
    sub = ap.add_subparsers(dest="command", required=True)

    u = sub.add_parser("run-uniform", help="uniform refinement study")
    _common(u)
    u.add_argument("--levels", type=int, default=4)

    a = sub.add_parser("run-adaptive", help="adaptive loop")
    _common(a)
    a.add_argument("--theta", type=float, default=0.2)
    a.add_argument("--max-dofs", type=int, default=200_000)
    a.add_argument("--max-iterations", type=int, default=None)
    a.add_argument("--eta-tol", type=float, default=None)

    m = sub.add_parser("mesh-info", help="print mesh statistics")
    _common(m, with_material=False)

    s = sub.add_parser("self-test", help="run the property suites")
    s.add_argument("suites", nargs="*", help="subset of suites (default: all)")
    return ap


class UsageError(Exception):
    pass


def _material(args):
    ex_no = args.example or 1
    if ex_no == 3 and (args.lam is not None or args.mu is not None):
        raise UsageError("example 3 takes --E/--nu, not --lambda/--mu")
    if ex_no != 3 and (args.E is not None or args.nu is not None):
        raise UsageError("--E/--nu apply to example 3 only")
    for name in ("mu", "E"):
        v = getattr(args, name)
        if v is not None and v <= 0:
            raise UsageError(f"--{name} must be positive")
    if args.lam is not None and args.lam < 0:
        raise UsageError("--lambda must be non-negative")
    if args.nu is not None and not -1.0 < args.nu < 0.5:
        raise UsageError("--nu must lie in (-1, 1/2)")
    return get_example(ex_no, lam=args.lam, mu=args.mu, E=args.E, nu=args.nu)


def _initial_mesh(args, exact):
    if args.mesh is not None:
        return load_mesh(args.mesh.read_text())
    return exact.initial_mesh()


def _startup(exact, mesh) -> List:
    checks = [startup_spd(mesh, exact.A)]
    if exact.name == "example3" and getattr(exact, "alpha", None) is not None:
        checks.append(startup_geometry(exact.initial_mesh(), 0.75 * np.pi))
    return checks


def _emit(result, args) -> None:
    result.write_csv(sys.stdout if args.out is None else args.out)
    if args.plot:
        dofs = result.column("n_dofs")
        series = {"eta": result.column("eta")}
        errA = result.column("errA")
        if np.all(np.isfinite(errA)):
            series["||sigma - sigma_h||_A"] = errA
        svg = loglog_svg(dofs, series, slope=-2.0, title=f"{args.command} example {args.example or 1}")
        svg_path = (args.out or Path("elastamr")).with_suffix(".svg")
        svg_path.write_text(svg)


def _log(args, text: str) -> None:
    if not getattr(args, "quiet", False):
        print(text, file=sys.stderr, flush=True)


def cmd_run(args) -> int:
    exact = _material(args)
    mesh = _initial_mesh(args, exact)
    for c in _startup(exact, mesh):
        _log(args, c.line())
        if not c.passed:
            print(f"elastamr: startup check failed: {c.name}", file=sys.stderr)
            return EXIT_FAIL
    qd, ed = args.quad_degree, args.edge_quad_degree
    if args.command == "run-uniform":
        if args.levels < 1:
            raise UsageError("--levels must be positive")
        result = run_uniform(
            exact, args.levels, mesh, qd, ed,
            progress=lambda r: _log(args, f"level {r.level}: h={r.h_or_dofs:.4g}, "
                                          + format_progress(r.record).split(": ", 1)[1]),
        )
    else:
        try:
            cfg = AdaptConfig(args.theta, args.max_dofs, args.max_iterations, args.eta_tol)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        result = run_adaptive(exact, cfg, mesh, qd, ed, progress=lambda r: _log(args, format_progress(r)))
        if len(result.rows) >= 2:
            _log(args, f"tail slopes vs #dofs: eta {tail_slope(result, 'eta'):.3f}, "
                       f"errA {tail_slope(result, 'errA'):.3f}")
    _emit(result, args)
    return EXIT_OK


def cmd_mesh_info(args) -> int:
    if args.mesh is not None:
        mesh = load_mesh(args.mesh.read_text())
    else:
        mesh = get_example(args.example or 1).initial_mesh()
    labels = mesh.boundary_labels
    V, E, T = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    n_sigma = StressSpace(mesh).n
    lines = [
        f"vertices {V}",
        f"edges {E}",
        f"triangles {T}",
        "boundary " + ", ".join(f"{LABELS[k]}={int(np.sum(labels == k))}" for k in (1, 2)),
        f"area {mesh.areas.sum():.12g}",
        f"h_max {mesh.diameters.max():.6g}",
        f"h_min {mesh.diameters.min():.6g}",
        f"min_angle_deg {mesh.min_angle:.6g}",
        f"stress_dofs {n_sigma}",
        f"displacement_dofs {12 * T}",
        f"system_order {n_sigma + 12 * T}",
    ]
    print("\n".join(lines))
    return EXIT_OK


def cmd_self_test(args) -> int:
    unknown = [n for n in args.suites if n not in SUITES]
    if unknown:
        raise UsageError(f"unknown suite(s) {', '.join(unknown)}; choose from {', '.join(SUITES)}")
    checks = run_suites(args.suites or None)
    for c in checks:
        print(c.line())
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"{len(failed)} suite(s) failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    print(f"all {len(checks)} suites passed")
    return EXIT_OK


def _thread_limit():
    n = os.environ.get("ELASTAMR_THREADS")
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    try:
        k = int(n)
    except ValueError:
        raise UsageError(f"ELASTAMR_THREADS must be an integer, got {n!r}") from None
    return threadpool_limits(limits=max(1, k))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {
        "run-uniform": cmd_run,
        "run-adaptive": cmd_run,
        "mesh-info": cmd_mesh_info,
        "self-test": cmd_self_test,
    }
    try:
        with _thread_limit():  # caps BLAS and the sparse factorization
            return handlers[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except MeshError as exc:
        print(f"elastamr: invalid mesh: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SolverError as exc:
        print(f"elastamr: solver failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except OSError as exc:
        print(f"elastamr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_FAIL  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())

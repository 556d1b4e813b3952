"""Acceptance criteria, one test per criterion (criterion 7 split in two)."""
import time

import numpy as np
import pytest

from elastamr.adapt import AdaptConfig
from elastamr.bench.examples import example1, example2, example3, find_alpha, find_z
from elastamr.bench.norms import corner_elements
from elastamr.bench.study import run_adaptive, run_uniform, tail_slope
from elastamr.selftest import SUITES, check_dimension, run_suites

QUANTITIES = ("errA", "err_grad", "eta", "err_Aeps")

# rows h = 2^-1 .. 2^-4: values, then orders (NaN where none is printed)
TABLE = {
    10.0: (
        [[6.6998e-01, 7.9544e-01, 1.6615e01, 4.0073e-02],
         [5.2451e-02, 6.0585e-02, 1.3585e00, 9.3899e-03],
         [3.6139e-03, 4.5839e-03, 1.0918e-01, 7.1387e-04],
         [2.2714e-04, 3.0676e-04, 7.4510e-03, 4.5925e-05]],
        [[np.nan] * 4, [3.68, 3.71, 3.61, 2.09], [3.86, 3.72, 3.64, 3.72], [3.99, 3.90, 3.87, 3.96]],
    ),
    1e4: (
        [[6.6096e-01, 7.7905e-01, 1.6050e01, 4.3292e-02],
         [5.1630e-02, 5.8762e-02, 1.3066e00, 9.0182e-03],
         [3.5430e-03, 4.3977e-03, 1.0508e-01, 6.8780e-04],
         [2.2220e-04, 2.9277e-04, 7.1542e-03, 4.4330e-05]],
        [[np.nan] * 4, [3.68, 3.73, 3.62, 2.26], [3.87, 3.74, 3.64, 3.71], [4.00, 3.91, 3.88, 3.96]],
    ),
}

_uniform = {}


def uniform_study(lam, levels):
    """Example 1 uniform study, cached; also records the wall time per level."""
    key = lam
    if key not in _uniform or len(_uniform[key][0].rows) < levels:
        stamps = [time.perf_counter()]
        res = run_uniform(example1(lam), levels, progress=lambda r: stamps.append(time.perf_counter()))
        _uniform[key] = (res, np.diff(stamps))
    return _uniform[key]


def table_failures(lam):
    res, seconds = uniform_study(lam, 4)
    values, orders = TABLE[lam]
    got = np.array([[getattr(r.record, q) for q in QUANTITIES] for r in res.rows[:4]])
    got_orders = np.column_stack([res.orders(q)[:4] for q in QUANTITIES])
    bad = []
    for i in range(4):
        for j, q in enumerate(QUANTITIES):
            rel = abs(got[i, j] - values[i][j]) / values[i][j]
            if rel > 0.05:
                bad.append(f"h=2^-{i + 1} {q}: {got[i, j]:.4e} vs {values[i][j]:.4e} ({rel:.1%})")
            if i >= 2 and abs(got_orders[i, j] - orders[i][j]) > 0.15:
                bad.append(f"h=2^-{i + 1} order {q}: {got_orders[i, j]:.2f} vs {orders[i][j]:.2f}")
    if seconds[:4].sum() > 120:
        bad.append(f"runtime {seconds[:4].sum():.0f} s > 120 s")
    return bad, got


def test_criterion_1_table1():
    bad, _ = table_failures(10.0)
    assert not bad, "; ".join(bad)


def test_criterion_2_table2_and_lambda_robustness():
    bad, got = table_failures(1e4)
    _, ref = table_failures(10.0)
    for i in range(4):
        for j, q in enumerate(QUANTITIES):
            if q == "err_Aeps" and i == 0:
                continue  # printed tables themselves differ by 8% here
            rel = abs(got[i, j] - ref[i, j]) / ref[i, j]
            if rel >= 0.05:
                bad.append(f"h=2^-{i + 1} {q}: lambda 10 vs 1e4 differ by {rel:.1%}")
    assert not bad, "; ".join(bad)


@pytest.mark.slow
def test_criterion_3_effectivity():
    bad = []
    for lam in (10.0, 1e4):
        res, _ = uniform_study(lam, 6)
        ratio = res.column("eta")[2:6] / res.column("errA")[2:6]  # h = 2^-3 .. 2^-6
        spread = ratio.max() / ratio.min()
        if not spread <= 1.25:
            bad.append(f"lambda={lam:g}: ratios {np.round(ratio, 2)}, max/min {spread:.3f}")
    assert not bad, "; ".join(bad)


def adaptive_checks(exact, theta, grading):
    t = time.perf_counter()
    res = run_adaptive(exact, AdaptConfig(theta, max_dofs=50_000))
    seconds = time.perf_counter() - t
    bad = []
    last = res.rows[-1].record
    if last.n_dofs < 50_000:
        bad.append(f"stopped at {last.n_dofs} dofs")
    for q in ("eta", "errA"):
        s = tail_slope(res, q)
        if abs(s + 2.0) > 0.25:
            bad.append(f"{q} slope {s:.3f}")
    if grading:
        m = res.history.mesh
        ct, _ = corner_elements(m, (0.0, 0.0))
        ratio = m.diameters[ct].min() / m.diameters.max()
        if ratio > 1e-3:
            bad.append(f"corner h_min/h_max {ratio:.1e}")
    if seconds > 600:
        bad.append(f"runtime {seconds:.0f} s")
    return bad


@pytest.mark.slow
def test_criterion_4_example2_adaptive():
    bad = []
    for theta, lam in ((0.1, 10.0), (0.2, 10.0), (0.2, 1e4)):
        bad += [f"(theta={theta}, lambda={lam:g}) {b}" for b in adaptive_checks(example2(lam), theta, True)]
    assert not bad, "; ".join(bad)


@pytest.mark.slow
def test_criterion_5_example3_adaptive():
    bad = adaptive_checks(example3(1e5, 0.4999), 0.1, False)
    assert not bad, "; ".join(bad)


def test_criterion_6_roots():
    assert f"{find_z(10.0, 1.0):.15f}" == "0.561586549334359"
    assert f"{find_z(1e4, 1.0):.15f}" == "0.544505718203590"
    assert f"{find_alpha(0.75 * np.pi):.12f}" == "0.544483736782"


def test_criterion_7_property_suites():
    t = time.perf_counter()
    checks = run_suites(list(SUITES))
    seconds = time.perf_counter() - t
    failed = [c.line() for c in checks if not c.passed]
    assert not failed, "; ".join(failed)
    assert seconds < 30, f"{seconds:.1f} s"


def test_criterion_7_generating_layout_dimension():
    """The literal 3V+6E+9T space with an SPD mass matrix.

    Fails: the 36-function generating set has two dependencies per edge,
    so its mass matrix is singular (rank deficit 2E).
    """
    c = check_dimension("generating")
    assert c.passed, c.detail

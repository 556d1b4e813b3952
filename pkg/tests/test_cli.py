import subprocess
import sys

import numpy as np
import pytest

from elastamr.cli import build_parser, main
from elastamr.mesh import format_mesh
from elastamr.bench.examples import unit_square_mesh


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_run_uniform_stdout_is_deterministic(capsys):
    argv = ["run-uniform", "--example", "1", "--lambda", "10", "--levels", "2"]
    code, out, err = run(argv, capsys)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("level,h_or_dofs,err_sigma_A")
    assert len(lines) == 3
    assert lines[1].split(",")[2] == "6.699440e-01"
    assert "level 1:" in err and "spd" in err.lower()
    assert run(argv, capsys)[1] == out


def test_run_uniform_out_and_plot(tmp_path, capsys):
    out = tmp_path / "t1.csv"
    code, stdout, _ = run(["run-uniform", "--levels", "2", "--out", str(out), "--plot", "-q"], capsys)
    assert code == 0 and stdout == ""
    assert out.read_text().count("\n") == 3
    svg = out.with_suffix(".svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg


def test_run_adaptive_small(tmp_path, capsys):
    out = tmp_path / "a.csv"
    code, _, err = run(["run-adaptive", "--example", "1", "--theta", "0.5", "--max-dofs", "1500",
                        "--out", str(out)], capsys)
    assert code == 0
    assert "iter 0: dofs=" in err and "tail slopes" in err
    rows = out.read_text().splitlines()[1:]
    dofs = [float(r.split(",")[1]) for r in rows]
    assert np.all(np.diff(dofs) > 0) and dofs[-1] >= 1500


def test_mesh_file_input(tmp_path, capsys):
    p = tmp_path / "sq.mesh"
    p.write_text(format_mesh(unit_square_mesh()))
    code, out, _ = run(["mesh-info", "--mesh", str(p)], capsys)
    assert code == 0
    info = dict(line.split(" ", 1) for line in out.splitlines())
    assert info["vertices"] == "4" and info["triangles"] == "2"
    assert info["stress_dofs"] == "50" and info["system_order"] == "74"
    code, out, _ = run(["run-uniform", "--mesh", str(p), "--levels", "1", "-q"], capsys)
    assert code == 0 and len(out.splitlines()) == 2


def test_mesh_info_example(capsys):
    code, out, _ = run(["mesh-info", "--example", "3"], capsys)
    assert code == 0 and "neumann=2" in out and "area 3" in out


def test_bad_mesh_file(tmp_path, capsys):
    p = tmp_path / "bad.mesh"
    p.write_text("vertices 1\n0 0\n")
    code, _, err = run(["mesh-info", "--mesh", str(p)], capsys)
    assert code == 1 and "invalid mesh" in err


def test_missing_mesh_file(tmp_path, capsys):
    code, _, err = run(["mesh-info", "--mesh", str(tmp_path / "nope.mesh")], capsys)
    assert code == 3 and "I/O error" in err


@pytest.mark.parametrize(
    "argv",
    [
        ["run-uniform", "--example", "4"],
        ["run-uniform", "--example", "3", "--lambda", "5"],
        ["run-uniform", "--example", "1", "--nu", "0.3"],
        ["run-uniform", "--mu", "-1"],
        ["run-uniform", "--lambda", "-1"],
        ["run-uniform", "--levels", "0"],
        ["run-uniform", "--theta", "0.2"],
        ["run-adaptive", "--theta", "1.5"],
        ["run-adaptive", "--levels", "3"],
        ["run-uniform", "--example", "1", "--mesh", "x.mesh"],
        ["self-test", "nosuchsuite"],
        ["frobnicate"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_self_test_subset(capsys):
    code, out, _ = run(["self-test", "dimension", "dorfler"], capsys)
    assert code == 0 and "all 2 suites passed" in out


def test_self_test_all(capsys):
    code, out, _ = run(["self-test"], capsys)
    assert code == 0, out


def test_thread_env(monkeypatch, capsys):
    monkeypatch.setenv("ELASTAMR_THREADS", "1")
    assert run(["mesh-info"], capsys)[0] == 0
    monkeypatch.setenv("ELASTAMR_THREADS", "many")
    with pytest.raises(SystemExit) as info:
        main(["mesh-info"])
    assert info.value.code == 2


def test_parser_defaults():
    a = build_parser().parse_args(["run-adaptive"])
    assert (a.theta, a.max_dofs, a.quad_degree, a.edge_quad_degree) == (0.2, 200_000, 8, 10)


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "elastamr.cli", "mesh-info", "--example", "2"],
                       capture_output=True, text=True, check=False)
    assert r.returncode == 0 and "triangles" in r.stdout

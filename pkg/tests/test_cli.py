import csv
from pathlib import Path

import numpy as np
import pytest

from tslie.cli import (EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_TOLERANCE, load_basis,
                       load_problem, main, run)
from tslie.errors import ProblemFormatError

ROOT = Path(__file__).resolve().parent.parent
PROBLEMS = ROOT / "problems"


def write(tmp_path, text, name="p.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


DOUBLING = (PROBLEMS / "doubling.txt").read_text()


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_load_doubling_problem():
    spec = load_problem(PROBLEMS / "doubling.txt")
    assert spec.timescale == {"kind": "geometric", "t0": 1.0, "ratio": 2.0, "count": 21.0}
    assert spec.initial == (0.0, 1.0) and spec.boundary is None
    assert [name for name, _ in spec.generators] == ["g1"]
    assert spec.residual_tol == 1e-9 and spec.include_gauge


def test_doubling_run_outputs(tmp_path, capsys):
    assert main(["run", str(PROBLEMS / "doubling.txt"), "--out", str(tmp_path)]) == EXIT_OK
    traj = read_csv(tmp_path / "trajectory.csv")
    assert traj[0] == ["index", "t", "mu", "q", "qsigma", "qdelta", "qdeltadelta"]
    assert traj[4] == ["3", "8", "8", "3", "4", "0.125", "-0.0078125"]
    assert traj[-1][5:] == ["", ""] and traj[-2][6] == ""
    sym = read_csv(tmp_path / "sym_g1.csv")
    assert sym[0] == ["index", "t", "det_residual", "G", "I", "structure_res", "noether_res"]
    G = [float(r[3]) for r in sym[1:] if r[3]]
    np.testing.assert_allclose(G, [-n * (n + 1) for n in range(20)])
    report = (tmp_path / "report.txt").read_text()
    assert "verdict: PASS" in report
    assert "verdict: PASS" in capsys.readouterr().out


def test_outputs_are_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert main(["run", str(PROBLEMS / "doubling.txt"), "--out", str(tmp_path / sub)]) == 0
    for name in ("trajectory.csv", "sym_g1.csv", "report.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_oscillator_drift_is_reported(tmp_path):
    code = main(["run", str(PROBLEMS / "oscillator_z.txt"), "--out", str(tmp_path)])
    report = (tmp_path / "report.txt").read_text()
    assert "conserved-quantity drift exceeds tolerance" in report
    assert "drift=5.000000e-01" in report
    assert "determining residual" in report and "[PASS]" in report
    # time translation has tau != 0, so its drift is reported but not gated
    assert code == EXIT_OK
    sym = read_csv(tmp_path / "sym_time.csv")
    assert [float(r[4]) for r in sym[1:4]] == [-1.0, -0.5, -0.5]


def test_gated_drift_sets_exit_code(tmp_path):
    p = write(tmp_path, DOUBLING)
    code = main(["run", str(p), "--out", str(tmp_path / "o"), "--no-gauge"])
    assert code == EXIT_TOLERANCE
    assert "verdict: FAIL (g1.drift)" in (tmp_path / "o" / "report.txt").read_text()


def test_residual_tolerance_override(tmp_path):
    p = write(tmp_path, DOUBLING)
    # the implicit determining residual is near 1e-11 relative
    assert main(["run", str(p), "--out", str(tmp_path / "o"), "--residual-tol", "1e-14"]) == 1
    assert main(["run", str(p), "--out", str(tmp_path / "o"), "--residual-tol", "1e-9"]) == 0


def test_dubois_choice(tmp_path):
    main(["run", str(PROBLEMS / "doubling.txt"), "--out", str(tmp_path), "--dubois", "sigma"])
    report = (tmp_path / "report.txt").read_text()
    assert "dubois-reymond (sigma, selected" in report


def test_search_output(tmp_path):
    code = main(["run", str(PROBLEMS / "doubling.txt"), "--out", str(tmp_path),
                 "--search", str(PROBLEMS / "basis.txt")])
    assert code == EXIT_OK
    rows = read_csv(tmp_path / "search.csv")
    assert rows[0] == ["rank", "score", "null", "tau", "xi"]
    assert [r[4] for r in rows[1:4]] == ["1", "ln(t)", "q"]


@pytest.mark.parametrize("text, fragment", [
    (DOUBLING + "\n[boundary]\na = 0\nb = 1\n", "exactly one"),
    (DOUBLING.replace("xi = ln(t)/ln(2)", "xi = qd"), "'qd'"),
    (DOUBLING.replace("[lagrangian]", "[lagrangian]\nexpr = t"), "duplicate key"),
    (DOUBLING.replace("[lagrangian]\nexpr = t + qs*qd", ""), "missing section [lagrangian]"),
    (DOUBLING + "\n[extra]\n", "unknown section"),
    (DOUBLING.replace("count = 21", "count = 21\nsize = 4"), "unknown key"),
    (DOUBLING.replace("ratio = 2", "ratio = two"), "not a number"),
    (DOUBLING.replace("kind = geometric", "kind = spiral"), "unknown time scale kind"),
    (DOUBLING.replace("expr = t + qs*qd", "expr = t + "), "expr"),
    (DOUBLING.replace("[generator g1]", "[generator]"), "needs a name"),
    ("expr = t\n", "outside of any section"),
])
def test_malformed_problems(tmp_path, text, fragment):
    p = write(tmp_path, text)
    with pytest.raises(ProblemFormatError) as info:
        load_problem(p)
    assert fragment in str(info.value)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out", str(out)]) == EXIT_INPUT
    assert not out.exists()


def test_error_line_numbers(tmp_path):
    p = write(tmp_path, DOUBLING.replace("xi = ln(t)/ln(2)", "xi = qd"))
    with pytest.raises(ProblemFormatError) as info:
        load_problem(p)
    assert info.value.line == DOUBLING.splitlines().index("xi = ln(t)/ln(2)") + 1


def test_bad_scale_parameters_give_input_error(tmp_path):
    p = write(tmp_path, DOUBLING.replace("ratio = 2", "ratio = 0.5"))
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    assert not (tmp_path / "o").exists()


def test_numeric_failure_exit_code(tmp_path):
    text = """
[timescale]
kind = uniform
a = 0
b = 1
n_points = 11
[lagrangian]
expr = t*qd + qs
[initial]
q0 = 0
v0 = 1
"""
    p = write(tmp_path, text)
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == EXIT_NUMERIC
    assert main(["run", str(tmp_path / "missing.txt"), "--out", str(tmp_path / "o")]) == 2


def test_boundary_problem_with_flags(tmp_path):
    text = """
# oscillator between fixed ends
[timescale]
kind = explicit
points = 0, 0.1, 0.3, 0.4, 0.7, 0.8, 1.0
[lagrangian]
expr = qd^2/2 - qs^2/2
[acceleration]
expr = -qs
[generator shift]
tau = 0
xi = 0
[boundary]
a = 0
b = 1
[tolerances]
residual_tol = 1e-8
[flags]
include_gauge = false
discrete_variant = printed
"""
    spec = load_problem(write(tmp_path, text))
    assert spec.boundary == (0.0, 1.0) and not spec.include_gauge
    assert spec.residual_tol == 1e-8 and spec.drift_tol == 1e-9
    rep = run(spec, tmp_path / "o")
    assert rep.trajectory.q[-1] == pytest.approx(1.0, abs=1e-10)
    assert rep.passed


def test_basis_file(tmp_path):
    tau, xi = load_basis(PROBLEMS / "basis.txt")
    assert len(tau) == 1 and len(xi) == 4
    with pytest.raises(ProblemFormatError):
        load_basis(PROBLEMS / "doubling.txt")

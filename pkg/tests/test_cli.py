import csv
import math

import numpy as np
import pytest

from tfde.cli import main
from tfde.solver import load_config, preset, read_solution_csv, solve


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestExamples:
    def test_verify_identities(self, capsys, tmp_path):
        code, out, _ = run(
            capsys, "verify-identities", "--alpha", "0.5", "--profiles", "smooth", "--N", "256,512", "--out", str(tmp_path)
        )
        assert code == 0
        rows = read_rows(tmp_path / "identities.csv")
        ratios = [float(r[4]) for r in rows[1:] if r[2] == "512" and r[1] != "rl_lower_bound_margin"]
        assert len(ratios) == 6 and min(ratios) >= 1.5

    def test_ml_eval(self, capsys):
        code, out, _ = run(capsys, "ml-eval", "--alpha", "1", "--beta", "1", "--z", "1")
        assert code == 0 and out.startswith("2.718281828")
        assert float(out) == pytest.approx(math.e, rel=1e-15)

    def test_counterexample_rejected(self, capsys):
        code, _, err = run(capsys, "counterexample", "--alpha", "0.3", "--beta", "-0.6")
        assert code == 2 and "beta > -1/2" in err

    def test_counterexample(self, capsys, tmp_path):
        code, out, _ = run(capsys, "counterexample", "--alpha", "0.3", "--beta", "-0.4", "--out", str(tmp_path))
        assert code == 0 and "bounded: False" in out
        assert (tmp_path / "counterexample.txt").read_text().strip() == out.strip()


class TestOutputs:
    def test_solve_roundtrip(self, capsys, tmp_path):
        code, out, _ = run(
            capsys, "solve", "--preset", "reaction", "--N", "64", "--modes", "4", "--out", str(tmp_path),
            "--points", "9", "--stride", "8",
        )
        assert code == 0
        spec = load_config(tmp_path / "problem.ini")
        assert f"spec sha256: {spec.hash}" in out
        assert spec == preset("reaction", N=64, n=4)
        t, coords, values = read_solution_csv(tmp_path / "solution.csv")
        ref = solve(spec).field.sample(*coords)[::8]
        # coordinates carry 15 digits, so values at x = pi are only zero to that precision
        np.testing.assert_allclose(values, ref, rtol=1e-13, atol=1e-13)
        assert "cross-solver discrepancy" in (tmp_path / "trace.txt").read_text()

    def test_convergence_study(self, capsys, tmp_path):
        code, out, _ = run(capsys, "convergence-study", "--N", "64,128,256", "--out", str(tmp_path))
        assert code == 0 and "fitted order" in out
        rows = read_rows(tmp_path / "errors.csv")
        assert [int(r[0]) for r in rows[1:]] == [64, 128, 256]
        errs = [float(r[1]) for r in rows[1:]]
        assert errs[0] > errs[1] > errs[2]
        assert load_config(tmp_path / "problem.ini").epsilon == 0.0

    def test_energy_check(self, capsys, tmp_path):
        code, out, _ = run(capsys, "energy-check", "--preset", "forced", "--N", "128", "--out", str(tmp_path))
        assert code == 0 and "passed: True" in out
        rows = dict(read_rows(tmp_path / "energy.csv")[1:])
        assert float(rows["lhs(T)"]) <= float(rows["rhs(T)"])

    def test_solve_with_energy(self, capsys):
        code, out, _ = run(capsys, "solve", "--preset", "heat", "--N", "64", "--solver", "l1", "--energy")
        assert code == 0 and "first_energy_estimate" in out

    def test_ml_verbose(self, capsys):
        code, out, _ = run(capsys, "ml-eval", "--alpha", "0.5", "--z=-1,0,-50", "--verbose")
        lines = out.splitlines()
        assert code == 0 and len(lines) == 3 and "regime=asymptotic" in lines[2]


class TestExitCodes:
    def test_malformed_config(self, capsys, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[time]\nalpha = 0.5\nsteps = 3\n")
        code, _, err = run(capsys, "solve", "--config", str(path))
        assert code == 2 and "steps" in err

    def test_missing_config(self, capsys, tmp_path):
        code, _, _ = run(capsys, "solve", "--config", str(tmp_path / "none.ini"))
        assert code == 2

    def test_bad_coefficients(self, capsys, tmp_path):
        path = tmp_path / "p.ini"
        path.write_text("[coefficients]\nspec = a: (1+0.9*sin(8*t))*I\nlam = 0.5\nmu = 2\n")
        code, _, err = run(capsys, "solve", "--config", str(path), "--N", "64")
        assert code == 2 and "[ellipticity]" in err

    def test_divergent_profile(self, capsys):
        code, _, err = run(capsys, "verify-identities", "--profiles", "divergent", "--N", "64,128")
        assert code == 1 and "invariant failure" in err

    def test_nonconvergence(self, capsys, tmp_path):
        path = tmp_path / "p.ini"
        path.write_text(preset("heat", N=64, solver="picard").to_config().replace("max_iter = 200", "max_iter = 1").replace("tol = 1e-10", "tol = 1e-15"))
        code, _, err = run(capsys, "solve", "--config", str(path))
        assert code == 3 and "[picard]" in err

    def test_ml_outside_horizon(self, capsys):
        code, _, _ = run(capsys, "ml-eval", "--alpha", "1", "--z", "1000")
        assert code == 2

    @pytest.mark.parametrize(
        "argv",
        [[], ["bogus"], ["solve", "--bogus"], ["verify-identities", "--N", "0,4"], ["ml-eval", "--alpha", "1", "--z", "x"]],
    )
    def test_usage_errors(self, capsys, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        capsys.readouterr()
        assert info.value.code == 2

    def test_small_identity_grid(self, capsys):
        code, _, _ = run(capsys, "verify-identities", "--N", "8,16")
        assert code == 2

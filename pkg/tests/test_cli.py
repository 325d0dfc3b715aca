import csv
import io
import json

import numpy as np
import pytest

from lagrangian_euler import selfsim as ss
from lagrangian_euler import specfun as sf
from lagrangian_euler.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, EXIT_SUITE, main,
                                  run_oracle_suite)


def run(capsys, *args):
    code = main(list(args))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestExitCodes:
    @pytest.mark.parametrize("args", [
        ("solve", "--n", "12"),
        ("solve", "--dt", "-1"),
        ("solve", "--sobolev", "2"),
        ("solve", "--preset", "file"),
        ("selfsim", "eigen", "--q", "-1", "--ka", "1"),
        ("specfun", "table", "--alpha", "0.5", "--interval", "0.3,0.7"),
        ("nonsense",),
    ])
    def test_config_errors(self, capsys, args):
        code, _, err = run(capsys, *args)
        assert code == EXIT_CONFIG
        assert err

    def test_solver_failure(self, capsys):
        code, _, err = run(capsys, "solve", "--n", "8", "--amplitude", "20", "--bn-radius", "0.01",
                           "--dt", "0.05", "--t-end", "0.1")
        assert code == EXIT_SOLVER
        assert "solver failure" in err

    def test_suite_failure(self, capsys):
        code, out, _ = run(capsys, "oracle", "--count", "2", "--corrupt")
        assert code == EXIT_SUITE
        assert json.loads(out)["pass"] is False


class TestSolve:
    def test_zero_preset_rows(self, capsys):
        code, out, _ = run(capsys, "solve", "--preset", "zero", "--n", "8", "--t-end", "0.003")
        assert code == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [float(r["t"]) for r in rows] == pytest.approx([0.0, 0.001, 0.002, 0.003])
        for r in rows:
            for key in ("n_y", "dn_dy", "n_v", "max_det_dev", "cauchy_residual"):
                assert float(r[key]) == 0.0

    def test_artifacts(self, capsys, tmp_path):
        out = tmp_path / "run"
        code, _, _ = run(capsys, "solve", "--n", "8", "--t-end", "0.002", "--out", str(out))
        assert code == EXIT_OK
        assert {p.name for p in out.iterdir()} >= {"config.json", "diagnostics.csv", "y.lefs", "omega.lefs"}
        assert json.loads((out / "config.json").read_text())["command"] == "solve"

    def test_rerun_identical(self, capsys, tmp_path):
        out = tmp_path / "run"
        assert run(capsys, "solve", "--n", "8", "--t-end", "0.002", "--out", str(out))[0] == EXIT_OK
        assert run(capsys, "rerun", str(out))[0] == EXIT_OK
        first = (out / "diagnostics.csv").read_bytes()
        assert (out / "rerun" / "diagnostics.csv").read_bytes() == first

    def test_rerun_missing_config(self, capsys, tmp_path):
        assert run(capsys, "rerun", str(tmp_path))[0] == EXIT_CONFIG


class TestSelfsimCommands:
    def test_eigen(self, capsys):
        code, out, _ = run(capsys, "selfsim", "eigen", "--q", "0.5", "--ka", "1")
        assert code == EXIT_OK
        assert out.splitlines() == ["lambda1 = 4", "lambda2*lambda3 = 2"]

    def test_modes(self, capsys):
        code, out, _ = run(capsys, "selfsim", "modes", "--ka", "0.4")
        assert code == EXIT_OK
        assert "B = 0 (unbounded" in out

    def test_subgroups_json(self, capsys):
        code, out, _ = run(capsys, "selfsim", "subgroups", "--json")
        assert code == EXIT_OK
        assert json.loads(out) == ss.catalog_report()

    def test_css_check(self, capsys, tmp_path):
        M = ss.linear_css_matrix(np.random.default_rng(0))
        p = ss.CssProfile.linear(M, 0.7)
        path = tmp_path / "profile.npz"
        np.savez(path, xi=p.xi, zeta=p.zeta, Z=p.Z, gamma=p.gamma, spacing=p.spacing, ka=0.7)
        code, out, _ = run(capsys, "selfsim", "css-check", str(path))
        assert code == EXIT_OK
        report = json.loads(out)
        assert max(report["residuals"].values()) < 1e-12

    def test_css_check_missing_key(self, capsys, tmp_path):
        path = tmp_path / "bad.npz"
        np.savez(path, xi=np.zeros((3, 5, 5, 5)))
        assert run(capsys, "selfsim", "css-check", str(path))[0] == EXIT_CONFIG


class TestSpecfunTable:
    def test_matches_library(self, capsys, tmp_path):
        out = tmp_path / "g.csv"
        assert run(capsys, "specfun", "table", "--alpha", "0.37", "--mmax", "3", "--out", str(out))[0] == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        lib = sf.family_table(sf.build_family(0.37, "0.5,1.5", 3))
        assert len(rows) == len(lib)
        for r, l in zip(rows, lib):
            assert (int(r["m"]), int(r["alpha_power"]), int(r["x_power"])) == (l["m"], l["alpha_power"], l["x_power"])
            assert float(r["re"]) == l["re"] and float(r["im"]) == l["im"]
        cert = json.loads(out.with_suffix(".json").read_text())
        assert cert["triangular"]

    def test_deterministic(self, capsys, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for p in paths:
            run(capsys, "specfun", "table", "--alpha", "0.37", "--out", str(p))
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestOracle:
    def test_empty_suite_passes(self, capsys):
        code, out, _ = run(capsys, "oracle", "--count", "0")
        assert code == EXIT_OK and json.loads(out)["cases"] == []

    def test_seeded_reproducible(self):
        a, b = run_oracle_suite(seed=3, count=3), run_oracle_suite(seed=3, count=3)
        assert a == b and a["pass"]

    def test_corruption_detected(self):
        assert not run_oracle_suite(seed=3, count=2, corrupt=True)["pass"]


class TestOtherCommands:
    def test_relabel(self, capsys):
        code, out, _ = run(capsys, "relabel", "--n", "8", "--t-end", "0.05")
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["n_y_after"] < report["n_y_before"]

    def test_perturb(self, capsys):
        code, out, _ = run(capsys, "perturb", "--s-values", "-0.4,-0.2", "--dt", "0.1")
        assert code == EXIT_OK
        assert "consecutive_distances" in json.loads(out)

    def test_perturb_bad_values(self, capsys):
        assert run(capsys, "perturb", "--s-values", "a,b")[0] == EXIT_CONFIG

import json

import numpy as np
import pytest

from convexopt.cli import ConfigError, main, parse_problem_file


def write_problem(tmp_path, doc, name="prob.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


GOOD = {
    "functional": {"name": "quad_circle", "params": {"c": 1.5}},
    "regime": {"type": "annulus", "a": 1.0, "b": 2.0},
    "grid_n": 64,
}


class TestParseProblemFile:
    def test_defaults_materialized(self):
        problem, options, k, effective = parse_problem_file(dict(GOOD))
        assert problem.grid_n == 64
        assert k == 1
        assert effective["solver"]["kkt_tol"] == 1e-8
        assert effective["outputs"]["csv"] == "u.csv"
        assert effective["functional"]["params"]["c"] == 1.5

    def test_unknown_keys_rejected_with_pointers(self):
        doc = dict(GOOD)
        doc["bogus"] = 1
        doc["functional"] = {"name": "quad_circle", "oops": 2}
        with pytest.raises(ConfigError) as err:
            parse_problem_file(doc)
        msg = str(err.value)
        assert "/bogus" in msg and "/functional/oops" in msg

    def test_inverted_box_rejected(self):
        doc = dict(GOOD)
        doc["regime"] = {"type": "annulus", "a": 2.0, "b": 1.0}
        with pytest.raises(ConfigError, match="regime.a must be < regime.b"):
            parse_problem_file(doc)

    def test_unknown_functional(self):
        doc = dict(GOOD)
        doc["functional"] = {"name": "nope"}
        with pytest.raises(ConfigError, match="/functional/name"):
            parse_problem_file(doc)

    def test_volume_regime(self):
        doc = {"functional": {"name": "quad_circle"},
               "regime": {"type": "volume", "m0": 1.4}, "grid_n": 64}
        problem, _o, _k, effective = parse_problem_file(doc)
        assert problem.regime.kind == "volume"
        assert len(effective["regime"]["box"]) == 2

    def test_bad_grid(self):
        doc = dict(GOOD)
        doc["grid_n"] = 63
        with pytest.raises(ConfigError, match="/grid_n"):
            parse_problem_file(doc)


class TestCommands:
    def test_solve_writes_outputs(self, tmp_path, capsys):
        prob = write_problem(tmp_path, GOOD)
        out = tmp_path / "run"
        code = main(["solve", "--problem", prob, "--out", str(out)])
        assert code == 0
        for name in ("u.csv", "shape.svg", "certificate.json", "report.txt",
                     "figure.svg", "effective_config.json"):
            assert (out / name).exists(), name
        report = (out / "report.txt").read_text()
        assert "verdict:" in report and "HasArcs (circle u=1.5)" in report
        cert = json.loads((out / "certificate.json").read_text())
        assert set(cert["residuals"]) == {"stationarity", "comp_zeta", "comp_a", "comp_b"}

    def test_solve_bad_config_exit_1(self, tmp_path, capsys):
        doc = dict(GOOD)
        doc["regime"] = {"type": "annulus", "a": 2.0, "b": 1.0}
        prob = write_problem(tmp_path, doc)
        assert main(["solve", "--problem", prob, "--out", str(tmp_path / "x")]) == 1

    def test_solve_rerun_bit_identical(self, tmp_path, capsys):
        prob = write_problem(tmp_path, GOOD)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["solve", "--problem", prob, "--out", str(out1), "--seed", "3"]) == 0
        assert main(["solve", "--problem", prob, "--out", str(out2), "--seed", "3"]) == 0
        assert (out1 / "u.csv").read_bytes() == (out2 / "u.csv").read_bytes()
        assert ((out1 / "effective_config.json").read_bytes()
                == (out2 / "effective_config.json").read_bytes())

    def test_verify_accepts_solution(self, tmp_path, capsys):
        prob = write_problem(tmp_path, GOOD)
        out = tmp_path / "run"
        assert main(["solve", "--problem", prob, "--out", str(out)]) == 0
        code = main(["verify", str(out / "u.csv"), "--problem", prob,
                     "--out", str(tmp_path / "v")])
        assert code == 0
        assert (tmp_path / "v" / "certificate.json").exists()

    def test_verify_rejects_nonstationary(self, tmp_path, capsys):
        prob = write_problem(tmp_path, GOOD)
        csv = tmp_path / "u.csv"
        lines = ["theta,u"]
        h = 2 * np.pi / 64
        for i in range(64):
            lines.append(f"{i * h:.17g},{1.2:.17g}")
        csv.write_text("\n".join(lines) + "\n")
        code = main(["verify", str(csv), "--problem", prob,
                     "--out", str(tmp_path / "v2")])
        assert code == 2

    def test_verify_projects_infeasible(self, tmp_path, capsys):
        prob = write_problem(tmp_path, GOOD)
        csv = tmp_path / "bad.csv"
        h = 2 * np.pi / 64
        rng = np.random.default_rng(0)
        vals = 1.5 + 0.3 * np.cos(5 * h * np.arange(64))
        lines = ["theta,u"] + [f"{i * h:.17g},{vals[i]:.17g}" for i in range(64)]
        csv.write_text("\n".join(lines) + "\n")
        code = main(["verify", str(csv), "--problem", prob, "--project",
                     "--out", str(tmp_path / "v3")])
        assert code in (0, 2)
        text = capsys.readouterr().out
        assert "feasible:      True" in text

    def test_reproduce_unknown_suite(self, capsys):
        assert main(["reproduce", "nope"]) == 1
        assert "available" in capsys.readouterr().err

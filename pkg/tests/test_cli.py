import json
import subprocess
import sys

import numpy as np
import pytest

from capax.cli import main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def files(tmp_path):
    return {
        "m2": write(tmp_path / "m2.json", {"entries": [[2, 1], [1, 2]]}),
        "ident": write(tmp_path / "ident.json", {"entries": np.eye(3).tolist()}),
        "newton": write(tmp_path / "newton.json", {"kind": "newtonian", "dim": 3}),
        "sphere": write(tmp_path / "sphere.json", {"kind": "sphere", "center": [0, 0, 0], "r": 1}),
        "ball": write(tmp_path / "ball.json", {"kind": "ball", "center": [0, 0, 0], "r": 1}),
        "A0": write(tmp_path / "a0.json", [0]),
        "all": write(tmp_path / "all.json", {"all": True}),
        "dirac0": write(tmp_path / "mu.json", {"dirac": 0}),
        "A1": write(tmp_path / "a1.json", {"indices": [1]}),
        "bad": str(tmp_path / "bad.json"),
    }


def read(path):
    return json.loads(path.read_text())


class TestCapacity:
    @pytest.mark.parametrize("form", ["primal", "dual", "obstacle", "minmass", "massmax"])
    def test_matrix_two_by_two(self, files, tmp_path, form):
        out = tmp_path / form
        assert main(["capacity", "--matrix", files["m2"], "--formulation", form, "-o", str(out)]) == 0
        res = read(out / "result.json")
        assert res["capacity"] == pytest.approx(2 / 3, abs=1e-12)
        assert (out / "gamma.csv").exists() and (out / "potential.csv").exists()

    def test_newtonian_sphere(self, files, tmp_path):
        code = main(["capacity", "--kernel", files["newton"], "--shape", files["sphere"],
                     "--formulation", "dual", "-o", str(tmp_path)])
        assert code == 0
        assert read(tmp_path / "result.json")["capacity"] == pytest.approx(1.0, rel=0.05)

    def test_float_round_trip(self, files, tmp_path):
        main(["capacity", "--matrix", files["m2"], "-o", str(tmp_path)])
        text = (tmp_path / "gamma.csv").read_text().splitlines()
        value = float(text[1].split(",")[1])
        res = read(tmp_path / "result.json")
        assert value * 2 == pytest.approx(res["capacity"], rel=1e-15)

    def test_missing_file(self, tmp_path, capsys):
        assert main(["capacity", "--matrix", str(tmp_path / "none.json"), "-o", str(tmp_path)]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_malformed_json(self, files, tmp_path, capsys):
        (tmp_path / "bad.json").write_text("{bad")
        assert main(["capacity", "--kernel", files["bad"], "--shape", files["sphere"], "-o", str(tmp_path)]) == 1
        assert "malformed JSON" in capsys.readouterr().err

    def test_analytic_kernel_needs_shape(self, files, tmp_path):
        assert main(["capacity", "--kernel", files["newton"], "-o", str(tmp_path)]) == 1

    def test_deterministic(self, files, tmp_path):
        for d in ("a", "b"):
            main(["capacity", "--kernel", files["newton"], "--shape", files["ball"], "--resolution", "2",
                  "-o", str(tmp_path / d)])
        assert (tmp_path / "a" / "result.json").read_text() == (tmp_path / "b" / "result.json").read_text()


class TestVerify:
    def test_characterizations(self, files, tmp_path):
        assert main(["verify", "--matrix", files["m2"], "--suite", "characterizations", "-o", str(tmp_path)]) == 0
        rep = read(tmp_path / "report.json")
        assert rep["passed"] and all(c["passed"] for c in rep["checks"])

    def test_principles_identity(self, files, tmp_path):
        assert main(["verify", "--matrix", files["ident"], "--suite", "principles", "-o", str(tmp_path)]) == 0
        rep = read(tmp_path / "report.json")
        frostman = [c for c in rep["checks"] if c["name"] == "frostman"][0]
        assert frostman["passed"]

    def test_balayage_consistency(self, files, tmp_path):
        code = main(["verify", "--matrix", files["m2"], "--suite", "balayage", "--subset", files["A0"],
                     "--superset", files["all"], "-o", str(tmp_path)])
        assert code == 0
        names = [c["name"] for c in read(tmp_path / "report.json")["checks"]]
        assert "consistency.swept_Q_equals_A" in names

    def test_convergence(self, files, tmp_path):
        assert main(["verify", "--matrix", files["m2"], "--suite", "convergence", "-o", str(tmp_path)]) == 0


class TestOtherCommands:
    def test_balayage(self, files, tmp_path):
        code = main(["balayage", "--matrix", files["m2"], "--subset", files["A1"], "--measure", files["dirac0"],
                     "-o", str(tmp_path)])
        assert code == 0
        res = read(tmp_path / "balayage.json")["results"]
        for r in res.values():
            assert r["weights"] == pytest.approx([0.0, 0.5], abs=1e-12)

    def test_converge(self, files, tmp_path):
        code = main(["converge", "--kernel", files["newton"], "--shape", files["ball"], "--resolution", "3",
                     "--order", "radius", "--stages", "3", "-o", str(tmp_path)])
        assert code == 0
        lines = (tmp_path / "convergence.csv").read_text().splitlines()
        assert lines[0].startswith("stage,size,capacity") and len(lines) == 4

    def test_calibrate(self, files, tmp_path):
        assert main(["calibrate", "--kernel", files["newton"], "--samples", "200000", "-o", str(tmp_path)]) == 0
        est = read(tmp_path / "calibration.json")
        assert abs(est["value"] - 2.4) <= 5 * est["stderr"]

    def test_module_entry_point(self, files, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "capax", "capacity", "--matrix", files["m2"], "-o", str(tmp_path)],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "capacity" in proc.stdout

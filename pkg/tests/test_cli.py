import json
import subprocess
import sys

import numpy as np
import pytest

from grvml.cli import main
from grvml.estimator import solve
from grvml.model import ProblemInstance, save_instance, save_solution
from grvml.published import EXAMPLES


@pytest.fixture
def ex_file(tmp_path):
    def make(k):
        p = tmp_path / f"ex{k}.json"
        save_instance(EXAMPLES[k].instance, p)
        return p
    return make


def test_solve_example3(ex_file, tmp_path, capsys):
    out = tmp_path / "sol.json"
    assert main(["solve", "--instance", str(ex_file("3")), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "case=RankDeficientNuPositive" in text
    nu = float(text.split("nu_star=")[1].split()[0])
    assert nu == pytest.approx(0.50, abs=0.02)
    assert "S=-inf" in text and "objective=" in text
    assert json.loads(out.read_text())["case"] == "RankDeficientNuPositive"


def test_solve_missing_instance(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--out", str(tmp_path / "s.json")])
    assert exc.value.code == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag(ex_file, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--instance", str(ex_file("3")), "--out", str(tmp_path / "s"), "--bogus"])
    assert exc.value.code == 1


def test_solve_invalid_variance(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"M": 1, "N": 1, "H": [[1.0]], "y": [1.0], "sigma_e2": 0.1, "sigma_eps2": 0}))
    assert main(["solve", "--instance", str(p), "--out", str(tmp_path / "s.json")]) == 1
    assert "InvalidVariance" in capsys.readouterr().err


def test_solve_numeric_failure(ex_file, tmp_path):
    code = main(["solve", "--instance", str(ex_file("4")), "--out", str(tmp_path / "s.json"),
                 "--max-iter", "2"])
    assert code == 2


def test_verify_example4(ex_file, capsys):
    assert main(["verify", "--instance", str(ex_file("4"))]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["schema"].startswith("grvml.verify-report/")
    assert report["passed"] and report["kkt"]["status"] == "passed" and report["grid"]["status"] == "passed"


def test_verify_corrupted_solution(ex_file, tmp_path, capsys):
    inst = EXAMPLES["4"].instance
    p = tmp_path / "sol.json"
    save_solution(solve(inst), p)
    obj = json.loads(p.read_text())
    obj["x_hat"][0] += 0.1
    p.write_text(json.dumps(obj))
    assert main(["verify", "--instance", str(ex_file("4")), "--against", str(p)]) == 3
    assert json.loads(capsys.readouterr().out)["passed"] is False


def test_verify_grid_skipped_for_large_N(tmp_path, capsys):
    rng = np.random.default_rng(0)
    inst = ProblemInstance(H=rng.standard_normal((8, 5)), y=rng.standard_normal(8), sigma_e2=0.1, sigma_eps2=0.05)
    p = tmp_path / "n5.json"
    save_instance(inst, p)
    assert main(["verify", "--instance", str(p)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["grid"]["status"] == "skipped" and report["kkt"]["status"] == "passed"


def test_experiment_files(tmp_path):
    assert main(["experiment", "--preset", "nmse-hist", "--trials", "20", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "nmse-hist-7.csv").exists()
    assert (tmp_path / "nmse-hist-7.summary.json").exists()


def test_experiment_mse_vs_m_crb(tmp_path):
    assert main(["experiment", "--preset", "mse-vs-m", "--trials", "5", "--seed", "1",
                 "--m-grid", "8,16,32", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "mse-vs-m-1.summary.json").read_text())
    assert [p["M"] for p in summary["points"]] == [8, 16, 32]
    assert all(p["crb_trace"] > 0 for p in summary["points"])


def test_experiment_zero_trials(tmp_path):
    assert main(["experiment", "--preset", "mse-vs-m", "--trials", "0", "--out", str(tmp_path)]) == 1


def test_experiment_unknown_preset(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["experiment", "--preset", "fig9", "--out", str(tmp_path)])
    assert exc.value.code == 1


def test_experiment_failure_rate_exit(tmp_path):
    code = main(["experiment", "--preset", "custom", "--M", "3", "--N", "5", "--trials", "3",
                 "--estimators", "GRVML,TLS", "--no-crb", "--out", str(tmp_path)])
    assert code == 2


@pytest.mark.parametrize("k", ["3", "fig1"])
def test_example_passes(k, capsys):
    assert main(["example", "--id", k]) == 0
    assert "reference" in capsys.readouterr().out


def test_example1_prints_two_optima(capsys):
    main(["example", "--id", "1"])
    out = capsys.readouterr().out
    assert "x_hat[1]" in out and "x_hat[2]" in out and "optima=2" in out


def test_example5_nu_row(capsys):
    main(["example", "--id", "5"])
    row = next(l for l in capsys.readouterr().out.splitlines() if l.startswith("nu_star"))
    assert float(row.split()[1]) == -0.48


def test_module_entry_point(ex_file, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "grvml", "solve", "--instance", str(ex_file("5")),
                           "--out", str(tmp_path / "s.json")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "case=FullRankNuNegative" in proc.stdout

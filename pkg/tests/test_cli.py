import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from plasmabranch.cli import COLUMNS, main


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


def test_solve_at_zero_lambda(tmp_path):
    assert main(["solve", "--domain", "unit-square", "--res", "24", "--lambda", "0", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "solve.csv")
    assert header == COLUMNS
    assert data.shape == (1, len(COLUMNS))
    assert data[0, COLUMNS.index("alpha")] == 1.0
    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["resolution"] == [24] and meta["mode"] == "solve"


@pytest.fixture(scope="module")
def linear_branch_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("branch")
    code = main(["branch", "--domain", "unit-disk", "--res", "96,8", "--p", "1", "--modes", "2",
                 "--out", str(out), "--plot"])
    assert code == 0
    return out


def test_branch_final_row(linear_branch_dir):
    header, data = read_csv(linear_branch_dir / "branch.csv")
    last = dict(zip(header, data[-1]))
    assert last["alpha"] == 0.0
    assert last["lambda"] == pytest.approx(18.17, rel=2e-3)
    assert last["E"] == pytest.approx(0.0398, rel=2e-3)
    meta = json.loads((linear_branch_dir / "branch.json").read_text())
    assert meta["termination"] == "alpha <= alpha_tol"
    assert (linear_branch_dir / "branch.gp").read_text().startswith("# gnuplot")


def test_branch_csv_supports_finite_differences(linear_branch_dir):
    header, data = read_csv(linear_branch_dir / "branch.csv")
    col = {h: data[:-1, i] for i, h in enumerate(header)}
    lam, alpha = col["lambda"], col["alpha"]
    # second-order slope on a nonuniform grid
    h1, h2 = lam[1:-1] - lam[:-2], lam[2:] - lam[1:-1]
    fd = (h1**2 * alpha[2:] - h2**2 * alpha[:-2] + (h2**2 - h1**2) * alpha[1:-1]) / (h1 * h2 * (h1 + h2))
    np.testing.assert_allclose(fd, col["dalpha_dlambda"][1:-1], rtol=1e-3)


def test_branch_output_is_byte_identical(tmp_path):
    args = ["branch", "--domain", "unit-square", "--res", "20", "--p", "2", "--lambda-max", "4", "--seed", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "branch.csv").read_bytes() == (tmp_path / "b" / "branch.csv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"domain": "unit-square", "res": 20, "lambda": 1.0, "p": 2}))
    assert main(["solve", "--config", str(cfg), "--lambda", "2", "--out", str(tmp_path)]) == 0
    _, data = read_csv(tmp_path / "solve.csv")
    assert data[0, 1] == 2.0
    meta = json.loads((tmp_path / "solve.json").read_text())
    assert meta["config"]["p"] == 2.0


@pytest.mark.parametrize(
    "content,field",
    [
        ({"domain": "unit-square", "colour": 1}, "colour"),
        ({"domain": "torus"}, "domain"),
        ({"p": 0.5}, "p"),
        ({"p": "two"}, "p"),
        ({"domain": "radial-ball(3)", "p": 3}, "p"),
        ({"lambda": -1}, "lam"),
        ({"k": 0}, "k"),
        ({"criteria": [99]}, "criteria"),
        ({"runs": [{"p": 0}]}, "p"),
        ({"runs": 3}, "runs"),
    ],
)
def test_bad_config_names_field(tmp_path, capsys, content, field):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps(content))
    assert main(["solve", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    assert f"'{field}" in capsys.readouterr().err


def test_unreadable_config(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text("{not json")
    assert main(["solve", "--config", str(cfg)]) == 1
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 1
    assert main(["solve", "--res", "4", "--domain", "unit-square", "--out", str(tmp_path)]) == 1
    assert "resolution" in capsys.readouterr().err


def test_solver_failure_past_endpoint(tmp_path, capsys):
    code = main(["solve", "--domain", "unit-disk", "--res", "64,8", "--p", "1", "--lambda", "25",
                 "--modes", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "before lambda" in capsys.readouterr().err


def test_spectrum_and_sobolev(tmp_path):
    assert main(["spectrum", "--domain", "unit-disk", "--res", "64,8", "--p", "2", "--lambda", "3",
                 "--k", "4", "--out", str(tmp_path)]) == 0
    header, data = read_csv(tmp_path / "spectrum.csv")
    assert header == ["j", "sigma", "mode", "mean"] and data.shape[0] == 4
    assert np.all(np.diff(data[:, 1]) >= 0)
    assert main(["sobolev", "--domain", "unit-square", "--res", "24", "--p", "2", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "sobolev.json").read_text())
    assert meta["t"] == 4.0 and meta["Lambda"] > 0


def test_verify_report(tmp_path, capsys):
    assert main(["verify", "--criteria", "1,3", "--domain", "unit-disk", "--res", "128,16",
                 "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert [r["id"] for r in rep["records"]] == [1, 3]
    for r in rep["records"]:
        assert {"id", "claim", "expected", "measured", "tolerance", "pass"} <= set(r)
    assert "criterion  1 PASS" in capsys.readouterr().out


def test_verify_failure_exit_code(tmp_path):
    assert main(["verify", "--criteria", "2", "--res", "256", "--domain", "radial-ball(3)",
                 "--out", str(tmp_path)]) == 3
    rep = json.loads((tmp_path / "verify.json").read_text())
    assert rep["failed"] == [2]


def test_batch_runs(tmp_path):
    cfg = tmp_path / "batch.json"
    cfg.write_text(json.dumps({"res": 20, "lambda": 1.0, "domain": "unit-square",
                               "runs": [{"p": 1}, {"p": 2}]}))
    assert main(["solve", "--config", str(cfg), "--jobs", "2", "--out", str(tmp_path / "out")]) == 0
    dirs = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert dirs == ["run00-unit-square-p1", "run01-unit-square-p2"]
    alphas = [read_csv(tmp_path / "out" / d / "solve.csv")[1][0, 2] for d in dirs]
    assert alphas[0] != alphas[1]


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "plasmabranch", "solve", "--domain", "unit-square",
                          "--res", "16", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert "alpha=1" in res.stdout

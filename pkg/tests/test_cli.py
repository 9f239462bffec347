import json
import subprocess
import sys

import numpy as np
import pytest

from gmf import get_family, load_csv_matrix, load_model, save_csv_matrix
from gmf.cli import main


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    rc = main(["simulate", "--n", "40", "--m", "12", "--p", "2", "--d", "1",
               "--family", "poisson", "--seed", "3",
               "--out-dir", str(out)])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def fitted(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    model = out / "model.json"
    rc = main(["fit", "--y", str(sim_dir / "y.csv"), "--x", str(sim_dir / "x.csv"),
               "--family", "poisson", "--rank", "2", "--tol", "1e-4",
               "--out", str(model)])
    assert rc == 0
    return model


def test_simulate_outputs(sim_dir):
    y, mask = load_csv_matrix(sim_dir / "y.csv")
    assert y.shape == (40, 12) and mask.all()
    x, _ = load_csv_matrix(sim_dir / "x.csv")
    assert x.shape == (40, 1)
    truth, meta = load_model(sim_dir / "truth.json")
    assert truth.lam.shape == (2, 12)
    assert meta["family"] == "poisson"


def test_fit_writes_model_and_report(fitted):
    params, meta = load_model(fitted)
    assert params.lam.shape[0] == 2
    report = json.loads((fitted.parent / "model.report.json").read_text())
    assert report["method"] == "airwls"
    assert report["converged"] is True
    trace = report["objective_trace"]
    assert len(trace) == report["iterations"] + 1
    assert trace[-1] <= trace[0]
    assert len(report["scree"]) == 2


def test_fit_rank_zero_rejected(sim_dir, tmp_path):
    rc = main(["fit", "--y", str(sim_dir / "y.csv"), "--family", "poisson",
               "--rank", "0", "--out", str(tmp_path / "m.json")])
    assert rc == 1


def test_fit_missing_file_is_input_error(tmp_path):
    rc = main(["fit", "--y", str(tmp_path / "nope.csv"), "--family", "poisson",
               "--rank", "1", "--out", str(tmp_path / "m.json")])
    assert rc == 1


def test_fit_bad_flag_is_input_error(tmp_path, capsys):
    rc = main(["fit", "--frobnicate"])
    capsys.readouterr()
    assert rc == 1


def test_fit_max_iter_exit_code(sim_dir, tmp_path):
    rc = main(["fit", "--y", str(sim_dir / "y.csv"), "--x", str(sim_dir / "x.csv"),
               "--family", "poisson", "--rank", "2", "--tol", "1e-12",
               "--max-iter", "2", "--out", str(tmp_path / "m.json")])
    assert rc == 3


def test_predict(fitted, sim_dir, tmp_path):
    out = tmp_path / "mu.csv"
    rc = main(["predict", "--model", str(fitted), "--x", str(sim_dir / "x.csv"),
               "--out", str(out), "--link-scale"])
    assert rc == 0
    mu, _ = load_csv_matrix(out)
    eta, _ = load_csv_matrix(tmp_path / "mu.eta.csv")
    assert mu.shape == (40, 12)
    assert np.allclose(mu, np.exp(eta), rtol=1e-12)


def test_eval_metrics(fitted, sim_dir, tmp_path):
    out = tmp_path / "metrics.json"
    rc = main(["eval", "--y", str(sim_dir / "y.csv"), "--x", str(sim_dir / "x.csv"),
               "--model", str(fitted), "--out", str(out)])
    assert rc == 0
    metrics = json.loads(out.read_text())
    assert metrics["deviance"] > 0
    assert 0 < metrics["null_deviance_fraction"] <= 1
    assert "auc" not in metrics  # poisson


def test_eval_with_mask(fitted, sim_dir, tmp_path):
    hold = np.zeros((40, 12))
    hold[:10] = 1
    save_csv_matrix(hold, tmp_path / "mask.csv")
    out = tmp_path / "metrics.json"
    rc = main(["eval", "--y", str(sim_dir / "y.csv"), "--x", str(sim_dir / "x.csv"),
               "--model", str(fitted), "--mask", str(tmp_path / "mask.csv"),
               "--out", str(out)])
    assert rc == 0
    sub = json.loads(out.read_text())
    full = json.loads((tmp_path / "metrics.json").read_text())
    assert sub["deviance"] <= full["deviance"]


def test_eval_bernoulli_reports_auc(tmp_path):
    rc = main(["simulate", "--n", "30", "--m", "8", "--p", "1", "--family",
               "bernoulli", "--seed", "1", "--out-dir", str(tmp_path / "sim")])
    assert rc == 0
    rc = main(["fit", "--y", str(tmp_path / "sim" / "y.csv"), "--family",
               "bernoulli", "--rank", "1", "--out", str(tmp_path / "m.json")])
    assert rc in (0, 3)
    rc = main(["eval", "--y", str(tmp_path / "sim" / "y.csv"), "--model",
               str(tmp_path / "m.json"), "--out", str(tmp_path / "e.json")])
    assert rc == 0
    metrics = json.loads((tmp_path / "e.json").read_text())
    assert 0 <= metrics["auc"] <= 1


def test_cv_rank_grid(sim_dir, tmp_path, capsys):
    out = tmp_path / "cv.csv"
    rc = main(["cv", "--y", str(sim_dir / "y.csv"), "--x", str(sim_dir / "x.csv"),
               "--family", "poisson", "--grid-rank", "1:3", "--folds", "4",
               "--tol", "1e-3", "--max-iter", "100", "--out", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("rank,")
    assert len(lines) == 4
    assert "best:" in capsys.readouterr().out


def test_cv_gamma_grid(sim_dir, tmp_path):
    out = tmp_path / "cv.csv"
    rc = main(["cv", "--y", str(sim_dir / "y.csv"), "--family", "poisson",
               "--grid-gamma", "0,2,8", "--rank", "4", "--folds", "4",
               "--tol", "1e-3", "--max-iter", "60", "--out", str(out)])
    assert rc == 0
    rows = out.read_text().strip().splitlines()[1:]
    gammas = [float(r.split(",")[1]) for r in rows]
    assert gammas == [0.0, 2.0, 8.0]
    assert all(r.split(",")[2] == r.split(",")[1] for r in rows)


def test_cv_requires_grid(sim_dir, tmp_path):
    rc = main(["cv", "--y", str(sim_dir / "y.csv"), "--family", "poisson",
               "--folds", "3", "--out", str(tmp_path / "cv.csv")])
    assert rc == 1


def test_scree(fitted, tmp_path):
    out = tmp_path / "scree.csv"
    rc = main(["scree", "--model", str(fitted), "--out", str(out)])
    assert rc == 0
    vals = [float(line) for line in out.read_text().strip().splitlines()]
    assert len(vals) == 2
    assert vals == sorted(vals, reverse=True)


def test_custom_na_token(tmp_path):
    y = np.array([[1.0, 2.0], [3.0, 4.0], [0.0, 1.0], [2.0, 0.0]])
    save_csv_matrix(y, tmp_path / "y.csv", mask=np.array(
        [[1, 1], [1, 0], [1, 1], [1, 1]]).astype(bool), na_token="?")
    rc = main(["--na-token", "?", "fit", "--y", str(tmp_path / "y.csv"),
               "--family", "poisson", "--rank", "1", "--tol", "1e-2",
               "--out", str(tmp_path / "m.json")])
    assert rc in (0, 3)


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gmf.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    for word in ("fit", "predict", "eval", "cv", "simulate", "scree"):
        assert word in proc.stdout


def test_installed_script():
    proc = subprocess.run(["gmf", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "fit" in proc.stdout

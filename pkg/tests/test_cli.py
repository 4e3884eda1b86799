import csv
import hashlib
import io
import json

import numpy as np
import pytest

from scalemle.cli import main

from conftest import FIXTURES


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def error_payload(err):
    return json.loads(err.strip().splitlines()[-1])


@pytest.fixture
def epoch(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")


# ------------------------------------------------------------- fit

def test_fit_fixture_within_three_se(fixture_csv, tmp_path, capsys, epoch):
    truth = json.loads((FIXTURES / "synthetic_fam1_g3.json").read_text())
    code, out, _ = run(["fit", fixture_csv, "--family", 1, "--gamma", 3, "--out", tmp_path], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "fit_report.json").read_text())
    assert json.loads(out) == rep
    beta = np.array(rep["mle"]["beta_hat"])
    se = np.array(rep["mle"]["standard_errors"][:2])
    assert np.all(np.abs(beta - truth["params"]["beta0"]) <= 3 * se)
    assert rep["ols"]["standard_errors"] is not None
    assert rep["meta"]["version"] and rep["meta"]["timestamp"] == "2023-11-14T22:13:20Z"
    with open(tmp_path / "residuals.csv") as fh:
        assert sum(1 for _ in fh) == 501


def test_fit_byte_identical(fixture_csv, tmp_path, capsys, epoch):
    blobs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        assert run(["fit", fixture_csv, "--family", 1, "--gamma", 3, "--out", out,
                    "--train-size", 300, "--replications", 20, "--seed", 5], capsys)[0] == 0
        blobs.append((out / "fit_report.json").read_bytes() + (out / "residuals.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_fit_gaussian_mle_equals_ols(fixture_csv, tmp_path, capsys):
    assert run(["fit", fixture_csv, "--family", 1, "--gamma", 2, "--out", tmp_path], capsys)[0] == 0
    rep = json.loads((tmp_path / "fit_report.json").read_text())
    np.testing.assert_allclose(rep["mle"]["beta_hat"], rep["ols"]["beta_hat"], rtol=0, atol=1e-6)


def test_fit_missing_column_exit_2(fixture_csv, tmp_path, capsys):
    code, _, err = run(["fit", fixture_csv, "--family", 1, "--gamma", 3, "--columns", "x1,weight",
                        "--out", tmp_path], capsys)
    assert code == 2
    payload = error_payload(err)
    assert payload["exit_code"] == 2 and "weight" in payload["message"]


def test_fit_config_file_flags_win(fixture_csv, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"csv": str(fixture_csv), "family": 1, "gamma": 2.0}))
    assert run(["fit", "--config", cfg, "--gamma", 3, "--out", tmp_path], capsys)[0] == 0
    rep = json.loads((tmp_path / "fit_report.json").read_text())
    assert rep["meta"]["config"]["gamma"] == 3.0 and rep["mle"]["gamma"] == 3.0


def test_fit_small_gamma_warns(fixture_csv, tmp_path, capsys):
    code, _, err = run(["fit", fixture_csv, "--family", 1, "--gamma", 0.85, "--out", tmp_path], capsys)
    assert code == 0 and "warning" in err and "not differentiable" in err


def test_fit_convergence_failure_exit_3(fixture_csv, tmp_path, capsys, monkeypatch):
    import scalemle.cli as cli
    from scalemle.estimators import mle_fit
    from scalemle.optimize import OptimizerSettings
    monkeypatch.setattr(cli, "mle_fit", lambda data, fam: mle_fit(data, fam, OptimizerSettings(max_iter=1)))
    code, _, err = run(["fit", fixture_csv, "--family", 1, "--gamma", 3, "--out", tmp_path], capsys)
    assert code == 3 and error_payload(err)["error"] == "ConvergenceFailure"
    assert not (tmp_path / "residuals.csv").exists()


def test_fit_requires_family(fixture_csv, capsys):
    code, _, err = run(["fit", fixture_csv, "--gamma", 3], capsys)
    assert code == 2 and "family" in error_payload(err)["message"]


# ------------------------------------------------------------- efficiency

def parse_table(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_efficiency_rows(capsys, tmp_path):
    code, out, _ = run(["efficiency", "--family", 1, "--gamma", "1,2,3", "--out", tmp_path], capsys)
    assert code == 0
    rows = parse_table(out)
    two = [r for r in rows if float(r["gamma"]) == 2.0][0]
    assert float(two["eta_closed"]) == pytest.approx(1.0, abs=1e-12)
    assert float(two["eta_quadrature"]) == pytest.approx(1.0, abs=1e-6)
    assert (tmp_path / "efficiency.csv").read_text() == out


def test_efficiency_family2_and_undefined(capsys):
    code, out, _ = run(["efficiency", "--family", 2, "--gamma", "3,1,0.5"], capsys)
    assert code == 0
    rows = parse_table(out)
    assert float(rows[0]["eta_closed"]) == pytest.approx(1 / 12, abs=1e-6)
    assert rows[1]["eta_closed"] == "undefined" and rows[2]["eta_closed"] == "undefined"


def test_efficiency_bad_gamma_exit_2(capsys):
    code, _, err = run(["efficiency", "--family", 1, "--gamma", "2,abc"], capsys)
    assert code == 2 and error_payload(err)["exit_code"] == 2


# ------------------------------------------------------------- simulate / are / sweep

def test_simulate_hash_stable(tmp_path, capsys, epoch):
    digests = []
    for k, threads in enumerate((1, 2)):
        out = tmp_path / f"s{k}"
        args = ["simulate", "--family", 3, "--gamma", 4, "--n", 200, "--d", 3, "--M", 12,
                "--seed", 7, "--threads", threads, "--out", out]
        assert run(args, capsys)[0] == 0
        summary = json.loads((out / "summary.json").read_text())
        summary["meta"]["config"].pop("threads")
        summary["config"].pop("threads")
        blob = json.dumps(summary, sort_keys=True).encode() + (out / "replications.csv").read_bytes()
        digests.append(hashlib.sha256(blob).hexdigest())
    assert digests[0] == digests[1]


def test_simulate_echoes_drawn_parameters(tmp_path, capsys):
    args = ["simulate", "--family", 1, "--gamma", 3, "--n", 100, "--d", 2, "--M", 5,
            "--seed", 7, "--threads", 1, "--out", tmp_path]
    assert run(args, capsys)[0] == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    params = summary["params"]
    for key in ("beta0", "mu_x", "sigma_x", "s0"):
        assert key in params
    assert summary["meta"]["config"]["seed"] == 7


def test_simulate_m0_exit_2(tmp_path, capsys):
    code, _, err = run(["simulate", "--family", 1, "--gamma", 3, "--M", 0, "--out", tmp_path],
                       capsys)
    assert code == 2 and error_payload(err)["error"] == "DomainError"


def test_simulate_desk_scale_ordering(tmp_path, capsys):
    args = ["simulate", "--family", 1, "--gamma", 5, "--n", 1000, "--d", 5, "--M", 100,
            "--seed", 0, "--threads", 2, "--out", tmp_path]
    assert run(args, capsys)[0] == 0
    s = json.loads((tmp_path / "summary.json").read_text())["summary"]
    assert s["mle"]["median"] < s["ols"]["median"]
    fig = parse_table((tmp_path / "figure_data.csv").read_text())
    assert {r["estimator"] for r in fig} >= {"ols", "mle"}


def test_are_report_structure(tmp_path, capsys):
    args = ["are", "--family", 1, "--gamma", 3, "--n", 300, "--d", 3, "--M", 20,
            "--batches", 3, "--threads", 1, "--out", tmp_path]
    assert run(args, capsys)[0] == 0
    rep = json.loads((tmp_path / "are.json").read_text())["report"]
    for key in ("eta_empirical", "ci_low", "ci_high", "eta_closed"):
        assert key in rep
    assert len(rep["batch_estimates"]) == 3
    assert rep["ci_low"] <= rep["eta_empirical"] <= rep["ci_high"]
    assert rep["eta_closed"] == pytest.approx(1 / 1.132093, rel=1e-5)


def test_sweep_five_rows(tmp_path, capsys):
    args = ["sweep", "--family", 1, "--gamma", 3, "--n", 200, "--M", 10, "--threads", 1,
            "--out", tmp_path]
    assert run(args, capsys)[0] == 0
    rows = parse_table((tmp_path / "sweep.csv").read_text())
    assert [int(r["d"]) for r in rows] == [3, 5, 8, 10, 15]
    assert len(parse_table((tmp_path / "sweep_figure.csv").read_text())) == 10


def test_feasible_region_positive(fixture_csv, tmp_path, capsys):
    code, _, _ = run(["feasible-region", fixture_csv, "--family", 1, "--gamma", 3,
                      "--out", tmp_path], capsys)
    assert code == 0
    payload = json.loads((tmp_path / "feasible_region.json").read_text())
    region = payload["region"]
    for key in ("R0", "sigma0", "sigma1"):
        assert np.isfinite(region[key]) and region[key] > 0
    assert payload["mle_inside"] is True

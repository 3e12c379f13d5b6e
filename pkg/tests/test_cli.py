import json
import subprocess
import sys
import time

import pytest

from dnsspp.cli import main


def read_all(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["simulate", "--kind", "stationary", "--seeds", "10", "--out-dir", str(out)]) == 0
    return out


def test_simulate_outputs(data):
    assert len(list(data.glob("stationary_events_*.csv"))) == 10
    assert len(list(data.glob("stationary_truth_*.csv"))) == 10
    doc = json.loads((data / "manifest.json").read_text())
    assert doc["command"] == "simulate"
    assert doc["settings"]["seeds"] == 10
    assert "numpy" in doc["versions"]


def test_simulate_byte_identical(tmp_path):
    out = tmp_path / "nested" / "run"
    args = ["simulate", "--kind", "nonstationary", "--seeds", "3", "--out-dir", str(out)]
    assert main(args) == 0
    first = read_all(out)
    assert main(args) == 0
    assert read_all(out) == first


def test_simulate_data_independent_of_out_dir(data, tmp_path):
    assert main(["simulate", "--kind", "stationary", "--seeds", "10", "--out-dir",
                 str(tmp_path)]) == 0
    a, b = read_all(tmp_path), read_all(data)
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b


def fit_args(data, out, *extra):
    return ["fit", "--events", str(data / "stationary_events_0.csv"), "--window", "[[0,10]]",
            "--epochs", "3", "--out-dir", str(out), *extra]


def test_fit_predict_evaluate(data, tmp_path):
    fit_dir, pred_dir, eval_dir = tmp_path / "fit", tmp_path / "pred", tmp_path / "eval"
    assert main(fit_args(data, fit_dir, "--layers", "50,30", "--lr", "0.01")) == 0
    model = json.loads((fit_dir / "model.json").read_text())
    assert [l["width"] for l in model["feature_map"]["layers"]] == [50, 30]
    assert len((fit_dir / "trace.csv").read_text().splitlines()) == 4

    assert main(["predict", "--model", str(fit_dir / "model.json"), "--resolution", "1000",
                 "--out-dir", str(pred_dir)]) == 0
    assert len((pred_dir / "grid.csv").read_text().splitlines()) == 1001

    assert main(["evaluate", "--model", str(fit_dir / "model.json"),
                 "--events", str(data / "stationary_events_0.csv"),
                 "--out-dir", str(eval_dir)]) == 0
    metrics = json.loads((eval_dir / "metrics.json").read_text())
    assert isinstance(metrics["L_test"], float) and "RMSE" not in metrics
    assert "constant_convention" in metrics and "runtime_seconds" in metrics

    assert main(["evaluate", "--model", str(fit_dir / "model.json"),
                 "--events", str(data / "stationary_events_1.csv"),
                 "--truth", str(data / "stationary_truth_1.csv"),
                 "--out-dir", str(eval_dir)]) == 0
    metrics = json.loads((eval_dir / "metrics.json").read_text())
    assert "L_test" in metrics and metrics["RMSE"] >= 0


def test_fit_tie_flag(data, tmp_path):
    assert main(fit_args(data, tmp_path, "--layers", "50", "--tie")) == 0
    model = json.loads((tmp_path / "model.json").read_text())
    assert model["feature_map"]["layers"][0]["tie"] is True


def test_config_file_and_flag_precedence(data, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"layers": [7], "epochs": 2, "window": [[0, 10]],
                               "events": str(data / "stationary_events_2.csv")}))
    out = tmp_path / "fit"
    assert main(["fit", "--config", str(cfg), "--epochs", "1", "--out-dir", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["settings"]["epochs"] == 1 and man["settings"]["layers"] == [7]
    assert man["settings"]["lr"] == 0.01


def test_invalid_layer_spec_exit_2(data, tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        main(fit_args(data, tmp_path, "--layers", "0"))
    assert info.value.code == 2


def test_usage_errors_exit_2(tmp_path):
    assert main(["fit", "--out-dir", str(tmp_path)]) == 2
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"nonsense": 1}')
    assert main(["predict", "--config", str(cfg)]) == 2


def test_runtime_error_exit_1(tmp_path):
    bad = tmp_path / "ev.csv"
    bad.write_text("11.0\n")
    assert main(["fit", "--events", str(bad), "--window", "[[0,10]]",
                 "--out-dir", str(tmp_path)]) == 1
    assert main(["predict", "--model", str(tmp_path / "missing.json")]) == 1


def test_benchmark_dry_run(tmp_path):
    t0 = time.perf_counter()
    assert main(["benchmark", "--dry-run", "--kinds", "stationary",
                 "--out-dir", str(tmp_path / "a")]) == 0
    assert time.perf_counter() - t0 < 60
    report = (tmp_path / "a" / "report.md").read_text()
    assert "NSSPP" in report and "(±" in report
    assert main(["benchmark", "--dry-run", "--kinds", "stationary",
                 "--out-dir", str(tmp_path / "b")]) == 0
    assert report == (tmp_path / "b" / "report.md").read_text()


def test_entry_point_module(tmp_path):
    res = subprocess.run([sys.executable, "-m", "dnsspp.cli", "fit", "--layers", "x"],
                         capture_output=True, text=True)
    assert res.returncode == 2

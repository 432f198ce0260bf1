import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from drmat.cli import RunConfig, load_csv, main, read_table, run_test_command, to_speeds
from drmat.errors import DataError, DomainError
from drmat.harness import ExperimentReport
from drmat.het_tests import TestConfig, drmat
from drmat.scenarios import ScenarioSpec, generate


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return str(path)


def dataset_csv(tmp_path, ds, name="data.csv"):
    header = ["y"] + [f"x{k + 1}" for k in range(ds.p)]
    rows = [[repr(float(v)) for v in (yi, *xi)] for yi, xi in zip(ds.y, ds.X)]
    return write_csv(tmp_path / name, header, rows)


@pytest.fixture
def null_csv(tmp_path):
    return dataset_csv(tmp_path, generate(ScenarioSpec("ex1", n=120, p=2, seed=17)))


def test_small_fixture_loads(tmp_path):
    path = write_csv(tmp_path / "s.csv", ["a", "b", "resp"],
                     [[1, 2, 0.5], [3, 4, 1.5], [5, 7, 2.5], [6, 1, 3.5]])
    ds = load_csv(path, "resp", ["a", "b"])
    np.testing.assert_array_equal(ds.X, [[1, 2], [3, 4], [5, 7], [6, 1]])
    np.testing.assert_array_equal(ds.y, [0.5, 1.5, 2.5, 3.5])
    # indices and the all-other-columns default resolve to the same thing
    ds2 = load_csv(path, "2")
    np.testing.assert_array_equal(ds2.X, ds.X)


def test_three_rows_two_covariates(tmp_path):
    path = write_csv(tmp_path / "s.csv", ["a", "b", "resp"], [[1, 2, 0.5], [3, 4, 1.5], [5, 7, 2.5]])
    names, table = read_table(path, ["resp", "a", "b"])
    assert table.shape == (3, 3) and names == ["resp", "a", "b"]
    with pytest.raises(DataError, match="p \\+ 2"):
        load_csv(path, "resp", ["a", "b"])


@pytest.mark.parametrize("cell", ["NA", "", "nan"])
def test_missing_value_names_row_and_column(tmp_path, cell):
    rows = [[1, 2, 0.5], [3, cell, 1.5], [5, 7, 2.5], [6, 1, 3.5]]
    path = write_csv(tmp_path / "s.csv", ["a", "b", "resp"], rows)
    with pytest.raises(DataError, match="row 2, column 'b': missing value"):
        load_csv(path, "resp", ["a", "b"])


def test_non_numeric_and_missing_column(tmp_path):
    path = write_csv(tmp_path / "s.csv", ["a", "resp"], [[1, "x"], [2, 1], [3, 2]])
    with pytest.raises(DataError, match="row 1, column 'resp': non-numeric"):
        load_csv(path, "resp", ["a"])
    with pytest.raises(DataError, match="column not found"):
        load_csv(path, "speed", ["a"])
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "absent.csv", "resp", ["a"])


def test_round_trip_preserves_statistic(tmp_path):
    ds = generate(ScenarioSpec("ex1", n=150, p=4, a=0.3, seed=5))
    back = load_csv(dataset_csv(tmp_path, ds), "y")
    cfg = TestConfig(seed=3)
    assert drmat(back, cfg).statistic == pytest.approx(drmat(ds, cfg).statistic, abs=1e-12)


@pytest.mark.parametrize("times, dist, expected", [
    ([[10.0]], [100], 10.0),
    ([[3.5]], [1500], 1500 / 210),
    ([[45.0]], [400], 400 / 45),
])
def test_to_speeds(times, dist, expected):
    assert to_speeds(times, dist)[0, 0] == pytest.approx(expected, rel=1e-12)


def test_to_speeds_units_and_errors():
    out = to_speeds([[10.0, 3.5], [9.8, 3.4]], [100, 1500])
    np.testing.assert_allclose(out[:, 1], [1500 / 210, 1500 / 204])
    np.testing.assert_allclose(to_speeds([[0.05]], [1500], ["h"]), [[1500 / 180]])
    with pytest.raises(DataError, match="row 2"):
        to_speeds([[10.0], [0.0]], [100])
    with pytest.raises(DomainError):
        to_speeds([[10.0]], [100, 200])
    with pytest.raises(DomainError):
        to_speeds([[10.0]], [100], ["fortnight"])


def test_run_config_validation():
    with pytest.raises(DomainError):
        RunConfig(command="test", alpha=[1.2])
    with pytest.raises(DomainError):
        RunConfig(command="fit")


def test_two_bandwidths_give_two_results(null_csv, tmp_path):
    rc = RunConfig(command="test", input=null_csv, response="y", h_multipliers=[1.0, 1.5])
    resid = tmp_path / "resid.csv"
    report = run_test_command(rc, residuals_out=str(resid))
    assert [r["h_multiplier"] for r in report["results"]] == [1.0, 1.5]
    assert report["results"][0]["qhat"] == len(report["results"][0]["basis"][0])
    lines = resid.read_text().splitlines()
    assert lines[0] == "row,index_value,residual" and len(lines) == 121


def test_null_p_values_spread_across_seeds(tmp_path):
    ps = []
    for seed in range(12):
        path = dataset_csv(tmp_path, generate(ScenarioSpec("ex1", n=100, p=2, seed=seed)), f"d{seed}.csv")
        ps.append(run_test_command(RunConfig(command="test", input=path, response="y"))["results"][0]["p_value"])
    assert all(0 <= p <= 1 for p in ps)
    assert max(ps) - min(ps) > 0.3


def _run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_test_command_is_deterministic(null_csv, tmp_path, capsys):
    args = ["test", "--input", null_csv, "--response", "y", "--method", "drmat", "--method", "zfn",
            "--h-mult", "1.0", "--h-mult", "1.5", "--seed", "4"]
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.json"
        code, _, err = _run(args + ["--out", str(path)], capsys)
        assert code == 0, err
        outs.append(json.loads(path.read_text()))
    for o in outs:
        assert set(o["metadata"]) == {"version", "started"}
        del o["metadata"]
    assert json.dumps(outs[0], sort_keys=True) == json.dumps(outs[1], sort_keys=True)
    assert [r["method"] for r in outs[0]["results"]] == ["drmat", "drmat", "zfn", "zfn"]


def test_cli_csv_format_for_test(null_csv, capsys):
    code, out, _ = _run(["test", "--input", null_csv, "--response", "y", "--format", "csv"], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.splitlines()))
    assert rows[0]["method"] == "drmat" and 0 <= float(rows[0]["p_value"]) <= 1


def test_cli_speed_conversion(tmp_path, capsys):
    r = np.random.default_rng(0)
    t100 = 10 + r.normal(scale=0.2, size=30)
    t1500 = 3.6 + 0.02 * t100 + r.normal(scale=0.05, size=30)
    t400 = 45 + r.normal(scale=0.5, size=30)
    path = write_csv(tmp_path / "runs.csv", ["m100", "m400", "m1500"], np.column_stack([t100, t400, t1500]).tolist())
    code, out, err = _run(["test", "--input", path, "--response", "m100", "--speed-distances", "100,400,1500"], capsys)
    assert code == 0, err
    assert json.loads(out)["input"]["n"] == 30


def test_cli_missing_response_column(null_csv, capsys):
    code, _, err = _run(["test", "--input", null_csv, "--response", "speed"], capsys)
    assert code == 3
    obj = json.loads(err)["error"]
    assert obj["type"] == "data" and "column not found" in obj["message"]


def test_cli_usage_errors(null_csv, capsys):
    assert _run(["test", "--input", null_csv], capsys)[0] == 2
    assert _run(["simulate", "--method", "ols"], capsys)[0] == 2
    code, _, err = _run(["simulate", "--alpha", "1.5"], capsys)
    assert code == 2 and json.loads(err)["error"]["type"] == "usage"


def test_cli_numerical_failure(tmp_path, capsys):
    r = np.random.default_rng(1)
    x = r.normal(size=40)
    path = write_csv(tmp_path / "c.csv", ["y", "x1", "x2"], np.column_stack([x + r.normal(size=40), x, 2 * x]).tolist())
    code, _, err = _run(["test", "--input", path, "--response", "y"], capsys)
    assert code == 4 and json.loads(err)["error"]["type"] == "numerical"


def test_cli_simulate_csv_parses_back(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("HET_SEED", "77")
    base = ["simulate", "--n", "60", "--reps", "6", "--alpha", "0.05", "--alpha", "0.2"]
    jpath, cpath = tmp_path / "r.json", tmp_path / "r.csv"
    assert _run(base + ["--out", str(jpath)], capsys)[0] == 0
    assert _run(base + ["--format", "csv", "--out", str(cpath)], capsys)[0] == 0
    obj = json.loads(jpath.read_text())
    assert obj["metadata"]["master_seed"] == 77
    from_csv = ExperimentReport.from_csv(cpath.read_text())
    assert [r.as_record() for r in from_csv.rows] == obj["rows"]


@pytest.mark.parametrize("args, n_rows", [
    (["power-curve", "--a-grid", "0,1"], 2),
    (["dim-sweep", "--p-grid", "2,4", "--a", "1"], 2),
    (["bw-sweep", "--h-mult", "1.0", "--h-mult", "1.5"], 2),
])
def test_cli_sweeps(args, n_rows, capsys):
    code, out, err = _run(args + ["--n", "60", "--reps", "3"], capsys)
    assert code == 0, err
    assert len(json.loads(out)["rows"]) == n_rows


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "drmat.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout

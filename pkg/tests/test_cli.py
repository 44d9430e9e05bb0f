import csv
import subprocess
import sys

import pytest

from sparsegrid import cli, dataset


def _ini(tmp_path, extra=""):
    text = f"""
[paths]
dataset = data.sgb
out = out

[generation]
n_records = 20
fs = 1000

[training]
n_trees = 4

[seeds]
data_seed = 5
model_seed = 1

[grid]
jobs = 1
{extra}
"""
    p = tmp_path / "run.ini"
    p.write_text(text)
    return p


@pytest.fixture()
def simulated(tmp_path):
    cfg = _ini(tmp_path, "windows = 10\nscenarios = missing_v, commloss:5\n")
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    return tmp_path, cfg


def test_simulate_summary_and_determinism(tmp_path, capsys):
    cfg = _ini(tmp_path)
    assert cli.main(["simulate", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "records:        20" in out
    assert "fault fraction: 0.500" in out
    first = (tmp_path / "data.sgb").read_bytes()
    other = tmp_path / "again.sgb"
    assert cli.main(["simulate", "--config", str(cfg), "--dataset", str(other)]) == 0
    assert other.read_bytes() == first
    recs = dataset.read_dataset(other)
    assert len(recs) == 20 and recs[0].samples.shape == (48, 1000)


def test_run_baseline_row(simulated, capsys):
    tmp_path, cfg = simulated
    assert cli.main(["run", "--config", str(cfg), "--task", "fd", "--window", "20"]) == 0
    out = capsys.readouterr().out
    rows = list(csv.DictReader((tmp_path / "out" / "run_FD_20ms_none.csv").open()))
    assert len(rows) == 1
    assert rows[0]["scenario"] == "none" and rows[0]["change_pct"] == "0.000000"
    assert "per-fold F1" in out


def test_run_scenario_reports_change(simulated):
    tmp_path, cfg = simulated
    args = ["run", "--config", str(cfg), "--task", "FLI", "--window", "10", "--scenario", "missing_v"]
    assert cli.main(args) == 0
    row = next(csv.DictReader((tmp_path / "out" / "run_FLI_10ms_missing_v.csv").open()))
    assert row["change_pct"] != ""


def test_run_inapplicable_comm_loss(simulated, capsys):
    _, cfg = simulated
    args = ["run", "--config", str(cfg), "--task", "FLI", "--window", "40", "--scenario", "commloss:45"]
    assert cli.main(args) == cli.EXIT_USAGE
    assert "not applicable" in capsys.readouterr().err


def test_run_bad_scenario(simulated):
    _, cfg = simulated
    args = ["run", "--config", str(cfg), "--task", "FD", "--window", "10", "--scenario", "bus:7"]
    assert cli.main(args) == cli.EXIT_USAGE


def test_run_missing_dataset(tmp_path):
    cfg = _ini(tmp_path)
    assert cli.main(["run", "--config", str(cfg), "--task", "FD", "--window", "10"]) == cli.EXIT_NOT_FOUND


def test_grid_outputs(simulated):
    tmp_path, cfg = simulated
    assert cli.main(["grid", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    rows = list(csv.DictReader((out / "results.csv").open()))
    # per task: baseline, missing_v, commloss:5 at the single 10 ms window
    assert [(r["task"], r["scenario"]) for r in rows] == [
        ("FD", "none"), ("FD", "missing_v"), ("FD", "commloss"),
        ("FLI", "none"), ("FLI", "missing_v"), ("FLI", "commloss"),
    ]
    for task in ("FD", "FLI"):
        heat = (out / f"heatmap_{task}.csv").read_text().splitlines()
        assert heat[0].startswith("window_ms,5,10")
        assert (out / f"heatmap_{task}.svg").read_text().startswith("<svg")
    assert (out / "timings.csv").exists()


def test_inspect(simulated, capsys):
    tmp_path, _ = simulated
    recs = dataset.read_dataset(tmp_path / "data.sgb")
    clean = next(r for r in recs if not r.is_fault)
    assert cli.main(["inspect", "--dataset", str(tmp_path / "data.sgb"), str(clean.record_id)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert "fault: none" in lines
    ratios = [float(line.split()[-1]) for line in lines if line.split()[:1] and line.split()[0].isdigit()]
    assert len(ratios) == 48
    assert all(abs(r - 1.0) < 0.02 for r in ratios)


def test_inspect_fault_record(simulated, capsys):
    tmp_path, _ = simulated
    recs = dataset.read_dataset(tmp_path / "data.sgb")
    rec = next(r for r in recs if r.is_fault)
    assert cli.main(["inspect", "--dataset", str(tmp_path / "data.sgb"), str(rec.record_id)]) == 0
    out = capsys.readouterr().out
    assert f"fault: line {rec.meta.fault_line}" in out


def test_inspect_unknown_record(simulated):
    tmp_path, _ = simulated
    assert cli.main(["inspect", "--dataset", str(tmp_path / "data.sgb"), "999"]) == cli.EXIT_NOT_FOUND


def test_bad_config_exit_code(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[seeds]\nrandom = 1\n")
    assert cli.main(["simulate", "--config", str(p)]) == cli.EXIT_USAGE


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sparsegrid.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout and "inspect" in proc.stdout

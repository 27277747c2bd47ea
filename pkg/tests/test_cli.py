from __future__ import annotations

import json

import pandas as pd
import pytest

from flowlab import cli
from flowlab.cli import run
from flowlab.paths import TRUTH_FILE, panel_files

SIM_TEXT = "n_funds = 12\nn_securities = 15\nn_days = 80\nburn_in = 31\nseed = 7\n"
STAGES = ("simulate", "load", "illiquidity", "estimate_impact", "decompose", "chase", "ponzi", "bubbles")


@pytest.fixture
def sim_file(tmp_path):
    path = tmp_path / "sim.conf"
    path.write_text(SIM_TEXT, encoding="utf-8")
    return path


def _written(panel_dir):
    files = [*panel_files(panel_dir).values(), panel_dir / TRUTH_FILE]
    return [path.read_bytes() for path in files]


def test_simulate_is_byte_identical(sim_file, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run(["simulate", "--config", str(sim_file), "--out", str(first)]) == 0
    assert run(["simulate", "--config", str(sim_file), "--out", str(second)]) == 0
    assert _written(first) == _written(second)


def test_simulate_seed_flag_changes_output(sim_file, tmp_path):
    assert run(["simulate", "--config", str(sim_file), "--out", str(tmp_path / "a")]) == 0
    assert run(["simulate", "--config", str(sim_file), "--seed", "8", "--out", str(tmp_path / "b")]) == 0
    assert _written(tmp_path / "a") != _written(tmp_path / "b")


def test_missing_column_exits_2(sim_file, tmp_path):
    panel_dir = tmp_path / "panel"
    assert run(["simulate", "--config", str(sim_file), "--out", str(panel_dir)]) == 0
    securities = panel_files(panel_dir)["securities"]
    pd.read_csv(securities).drop(columns=["volume_usd"]).to_csv(securities, index=False)
    assert run(["illiquidity", "--panel", str(panel_dir), "--out", str(tmp_path / "out")]) == 2


def test_missing_panel_exits_4(tmp_path):
    assert run(["illiquidity", "--panel", str(tmp_path / "nowhere"), "--out", str(tmp_path / "out")]) == 4


def test_bad_arguments_exit_2(tmp_path):
    assert run(["illiquidity", "--bogus"]) == 2
    assert run(["illiquidity", "--eta", "0", "--panel", str(tmp_path)]) == 2


def test_illiquidity_writes_measures(sim_file, tmp_path):
    panel_dir, out = tmp_path / "panel", tmp_path / "out"
    assert run(["simulate", "--config", str(sim_file), "--out", str(panel_dir)]) == 0
    assert run(["illiquidity", "--panel", str(panel_dir), "--out", str(out)]) == 0
    measures = pd.read_csv(out / "measures.csv")
    assert {"date", "fund_id", "fund_illiq", "fund_conc", "fund_size"} <= set(measures.columns)
    assert (out / "validation.json").exists()


def test_pipeline_writes_run_summary(sim_file, tmp_path):
    panel_dir, out = tmp_path / "panel", tmp_path / "out"
    code = run(
        [
            "pipeline",
            "--config",
            str(sim_file),
            "--panel",
            str(panel_dir),
            "--out",
            str(out),
            "--chase-lags",
            "10",
            "--chase-flow-lags",
            "2",
        ]
    )
    assert code == 0
    summary = json.loads((out / "run_summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "pass"
    assert set(summary["stage_statuses"]) == set(STAGES)
    assert set(summary["stage_statuses"].values()) == {"success"}
    assert summary["results"]["theta_used"] == summary["results"]["theta_hat"]
    assert (out / "ponzi_series.csv").exists()


def test_unexpected_error_exits_1(sim_file, tmp_path, monkeypatch):
    def broken(args):
        raise KeyError("nav_price")

    monkeypatch.setattr(cli, "cmd_simulate", broken)
    assert run(["simulate", "--config", str(sim_file), "--out", str(tmp_path / "out")]) == 1

from __future__ import annotations

import json

import pytest

from flowlab.config import RunConfig, SimConfig, threads_from_env
from flowlab.errors import InputValidationError, PanelIOError


def test_run_config_defaults():
    config = RunConfig().validate()
    assert config.eta == 0.5
    assert config.theta == 0.78
    assert config.decay is None
    assert config.exposure == "current"
    assert not config.winsorize


def test_run_config_load_and_override(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"eta": 0.6, "decay": [0.664, -0.087, 0.323], "sample": "active"}), encoding="utf-8")
    config = RunConfig.load(str(path))
    assert config.eta == 0.6
    assert config.decay == (0.664, -0.087, 0.323)
    changed = config.override(eta=None, theta=0.5, sample="passive")
    assert changed.eta == 0.6
    assert changed.theta == 0.5
    assert changed.sample == "passive"


def test_run_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"etaa": 0.6}), encoding="utf-8")
    with pytest.raises(InputValidationError, match="etaa"):
        RunConfig.load(str(path))


def test_run_config_missing_file():
    with pytest.raises(PanelIOError):
        RunConfig.load("does/not/exist.json")


@pytest.mark.parametrize(
    "changes",
    [
        {"eta": 0.0},
        {"eta": 1.5},
        {"theta": -1.0},
        {"decay": (0.6, -0.1, 0.0)},
        {"winsor_lower": 0.9, "winsor_upper": 0.1},
        {"exposure": "future"},
        {"sample": "hedge"},
    ],
)
def test_run_config_validation(changes):
    with pytest.raises(InputValidationError):
        RunConfig().override(**changes)


def test_sim_config_key_value_file(tmp_path):
    path = tmp_path / "sim.conf"
    path.write_text(
        "# small market\nn_funds = 5\nseed = 1e3\nchase_beta = 0.2  # chasing on\nchase_mode = fundamental\n",
        encoding="utf-8",
    )
    config = SimConfig.load(str(path))
    assert config.n_funds == 5
    assert config.seed == 1000
    assert config.chase_beta == 0.2
    assert config.chase_mode == "fundamental"


@pytest.mark.parametrize(
    "text, message",
    [
        ("n_fund = 5\n", "unknown key"),
        ("n_funds 5\n", "key = value"),
        ("n_funds = 2.5\n", "cannot parse"),
        ("flow_vol = nan\n", "cannot parse"),
    ],
)
def test_sim_config_bad_lines(tmp_path, text, message):
    path = tmp_path / "sim.conf"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(InputValidationError, match=message):
        SimConfig.load(str(path))


def test_sim_config_rejects_explosive_flows():
    with pytest.raises(InputValidationError, match="probability"):
        SimConfig(flow_vol=0.5).validate()
    assert SimConfig().flow_exceedance_probability() < 1e-12


def test_sim_config_decay():
    assert SimConfig().decay is None
    assert SimConfig(theta=0.664, theta1=-0.087, lambda_theta=0.323).decay == (0.664, -0.087, 0.323)


def test_threads_from_env(monkeypatch):
    monkeypatch.delenv("FLOWLAB_THREADS", raising=False)
    assert threads_from_env() == 1
    monkeypatch.setenv("FLOWLAB_THREADS", "4")
    assert threads_from_env() == 4
    monkeypatch.setenv("FLOWLAB_THREADS", "0")
    assert threads_from_env() == 1
    monkeypatch.setenv("FLOWLAB_THREADS", "many")
    with pytest.raises(InputValidationError):
        threads_from_env()

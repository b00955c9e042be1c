from __future__ import annotations

import json

import pytest

from negotiation_gym.cli import main

from conftest import BIKE_CONFIG_PATH


def write_config(tmp_path, doc) -> str:
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def invalid_doc() -> dict:
    return {
        "model": "m",
        "config": {
            "name": "x",
            "agents": [
                {"name": "A", "prompt": "p"},
                {"name": "A", "prompt": "p"},
            ],
            "termination_condition": "STOP",
            "output_variables": [],
        },
        "num_runs": 1,
    }


def test_validate_ok(capsys):
    assert main(["validate", str(BIKE_CONFIG_PATH)]) == 0
    assert "OK" in capsys.readouterr().out


def test_validate_violations_exit_1(tmp_path, capsys):
    path = write_config(tmp_path, invalid_doc())
    assert main(["validate", path]) == 1
    assert "agents[1].name" in capsys.readouterr().out


def test_validate_missing_file_exit_2(tmp_path):
    assert main(["validate", str(tmp_path / "absent.json")]) == 2


def test_run_is_deterministic(tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    args = ["run", str(BIKE_CONFIG_PATH), "--backend", "scripted", "--seed", "7"]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "environment.json").read_bytes() == (out_b / "environment.json").read_bytes()
    assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()


def test_run_bike_config_runs_ten_episodes(tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(BIKE_CONFIG_PATH), "--backend", "scripted", "--out", str(out)]) == 0
    doc = json.loads((out / "environment.json").read_text(encoding="utf-8"))
    assert len(doc["runs"]) == 10
    # The self-improving buyer accumulates one strategy per episode.
    assert len(doc["agent_strategies"]["Buyer"]) == 10
    assert len(doc["revisions"]) == 10


def test_run_remote_without_key_exits_2(tmp_path, monkeypatch):
    monkeypatch.delenv("NEGOTIATION_GYM_API_KEY", raising=False)
    out = tmp_path / "out"
    code = main(["run", str(BIKE_CONFIG_PATH), "--backend", "remote", "--out", str(out)])
    assert code == 2
    assert not (out / "environment.json").exists()


def test_experiment_all_modes(tmp_path):
    out = tmp_path / "exp"
    code = main(
        ["experiment", "--mode", "all", "--n", "3", "--max-turns", "30",
         "--seed", "0", "--backend", "scripted", "--out", str(out)]
    )
    assert code == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert len(report["modes"]) == 4
    assert (out / "report.csv").exists()
    for mode in ("no_reflect", "buyer_reflect", "seller_reflect", "both_reflect"):
        assert (out / f"rows_{mode}.csv").exists()


def test_experiment_single_mode(tmp_path):
    out = tmp_path / "exp"
    code = main(
        ["experiment", "--mode", "buyer_reflect", "--n", "2", "--max-turns", "12",
         "--seed", "1", "--backend", "scripted", "--out", str(out)]
    )
    assert code == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert list(report["modes"]) == ["buyer_reflect"]


def test_experiment_unknown_mode_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as excinfo:
        main(["experiment", "--mode", "sideways"])
    assert excinfo.value.code == 2


def test_serve_bad_addr_exits_2():
    assert main(["serve", "--addr", "nonsense"]) == 2
    assert main(["serve", "--addr", "localhost:70000"]) == 2

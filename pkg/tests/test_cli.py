import json

import pandas as pd
import pytest

from factories import SMALL_CONFIG

from app.cli import EXIT_ERROR, EXIT_OK, main
from app.core.config import get_settings
from app.db.session import get_engine
from app.services.run_store import list_runs


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG), encoding="utf-8")
    return path


@pytest.fixture
def ledger(tmp_path, monkeypatch):
    monkeypatch.setenv("DATABASE_URL", f"sqlite:///{tmp_path / 'ledger' / 'runs.db'}")
    get_settings.cache_clear()
    get_engine.cache_clear()
    yield
    get_settings.cache_clear()
    get_engine.cache_clear()


def test_bounds_writes_a_result_bundle(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["bounds", "--config", str(config_path), "--out", str(out), "--no-ledger"]) == EXIT_OK
    assert (out / "bounds.csv").is_file()
    assert (out / "bound_sweeps.csv").is_file()
    assert (out / "config.json").is_file()
    metadata = json.loads((out / "bounds_metadata.json").read_text())
    assert metadata["seed"] == 7
    table = pd.read_csv(out / "bounds.csv")
    assert len(table) == 2
    assert "bounds.csv" in capsys.readouterr().out


def test_seed_flag_overrides_the_file(config_path, tmp_path):
    out = tmp_path / "out"
    assert main(["bounds", "--config", str(config_path), "--out", str(out), "--seed", "21", "--no-ledger"]) == EXIT_OK
    assert json.loads((out / "bounds_metadata.json").read_text())["seed"] == 21
    assert json.loads((out / "config.json").read_text())["run"]["seed"] == 21


def test_report_summarises_a_bundle(config_path, tmp_path, capsys):
    out = tmp_path / "out"
    main(["bounds", "--config", str(config_path), "--out", str(out), "--no-ledger"])
    capsys.readouterr()
    assert main(["report", "--no-ledger", "--bundle", str(out)]) == EXIT_OK
    printed = capsys.readouterr().out
    assert "bounds: seed=7" in printed
    assert "bounds.csv: 2 rows" in printed


def test_invalid_config_exits_with_error(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"vehicles": [{"theta_deg": 200, "distance_m": 400, "speed_mps": 20}]}))
    assert main(["bounds", "--config", str(path), "--out", str(tmp_path / "out"), "--no-ledger"]) == EXIT_ERROR


def test_missing_config_exits_with_error(tmp_path):
    assert main(["bounds", "--config", str(tmp_path / "absent.json"), "--no-ledger"]) == EXIT_ERROR


def test_runs_are_recorded_in_the_ledger(config_path, tmp_path, ledger, capsys):
    out = tmp_path / "out"
    assert main(["bounds", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    runs = list_runs()
    assert len(runs) == 1
    assert runs[0].command == "bounds"
    assert runs[0].status == "completed"
    assert runs[0].output_path == str(out)
    capsys.readouterr()
    assert main(["report", "--limit", "5"]) == EXIT_OK
    assert "bounds" in capsys.readouterr().out

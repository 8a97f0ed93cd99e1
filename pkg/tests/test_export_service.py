import json
import math

import numpy as np
import pandas as pd
import pytest

from factories import small_scenario

from app.schemas.scenario import SlotRecord
from app.services.export_service import (
    PlotSeries,
    ResultBundle,
    jsonable,
    run_metadata,
    slot_columns,
    slot_frame,
    write_bundle,
    write_plot_data,
    write_table,
)


def _record(slot=1):
    states = np.array([[0.16, 400.0, 20.0], [0.21, 410.0, 18.0]])
    return SlotRecord(
        slot=slot,
        true_state=states,
        predicted_state=states + 1e-3,
        tracked_state=states - 1e-3,
        tx_positions=np.array([0.0, 0.005]),
        rx_positions=np.array([0.02, 0.025]),
        sum_rate=12.345678901234567,
        predicted_sum_rate=12.3,
        lpcrlb=np.array([[1e-7, 0.01, 0.1], [2e-7, 0.02, 0.2]]),
        pcrlb=np.array([[1.1e-7, 0.011, 0.11], [2.2e-7, 0.022, 0.22]]),
        covariance_diagonal=np.array([[1.1e-7, 0.011, 0.11], [2.2e-7, 0.022, 0.22]]),
        objective=12.345678901234567,
        feasible=True,
        sca_iterations=3,
    )


def test_slot_columns_follow_a_fixed_order():
    columns = slot_columns(2)
    assert columns[:3] == ["slot", "sum_rate_bits", "predicted_sum_rate_bits"]
    assert columns[3:5] == ["lpcrlb_theta_0", "lpcrlb_theta_1"]
    assert columns.index("true_theta_0") < columns.index("true_d_0") < columns.index("true_theta_1")
    assert columns[-4:] == ["feasible", "sca_iterations", "swarm_evaluations", "runtime_ms"]


def test_slot_table_round_trips_through_csv(tmp_path):
    frame = slot_frame([_record(1), _record(2)])
    path = write_table(tmp_path / "slots", frame)
    assert path.suffix == ".csv"
    loaded = pd.read_csv(path, float_precision="round_trip")
    assert list(loaded.columns) == slot_columns(2)
    assert loaded["sum_rate_bits"].iloc[0] == 12.345678901234567
    assert loaded["lpcrlb_theta_1"].iloc[1] == 2e-7
    assert loaded["est_d_1"].iloc[0] == pytest.approx(409.999)


def test_json_table_uses_row_objects(tmp_path):
    path = write_table(tmp_path / "slots", slot_frame([_record()]), fmt="json")
    rows = json.loads(path.read_text())
    assert path.suffix == ".json"
    assert rows[0]["slot"] == 1
    assert rows[0]["feasible"] is True


def test_plot_data_has_a_commented_header(tmp_path):
    path = write_plot_data(tmp_path / "plot.dat", [0.5, 1.0], [3.0, 4.5], ("rho", "sum_rate"))
    lines = path.read_text().splitlines()
    assert lines[0] == "# rho sum_rate"
    assert lines[1:] == ["0.5 3", "1 4.5"]


def test_jsonable_maps_non_finite_floats_to_null():
    payload = jsonable({"bound": math.inf, "values": np.array([1.0, np.nan]), "count": np.int64(3)})
    assert payload == {"bound": None, "values": [1.0, None], "count": 3}


def test_bundle_writes_tables_plots_and_metadata(tmp_path):
    scenario = small_scenario()
    bundle = ResultBundle(
        command="bounds",
        tables={"bounds": pd.DataFrame({"vehicle": [0], "theta_rad2": [1e-7]})},
        metadata=run_metadata(scenario, "bounds", aleph=np.array([1.0, 2.0, 3.0])),
        plots={"trace": PlotSeries([0, 1], [1.0, 2.0])},
    )
    paths = write_bundle(bundle, tmp_path)
    names = {path.name for path in paths}
    assert {"bounds.csv", "trace.dat", "bounds_metadata.json"} <= names
    metadata = json.loads((tmp_path / "bounds_metadata.json").read_text())
    assert metadata["seed"] == 7
    assert metadata["aleph"] == [1.0, 2.0, 3.0]
    assert metadata["config_hash"] == scenario.config_hash

import numpy as np
import pytest

from factories import QOS_OBJECTIVE, small_scenario

from app.core.errors import ConfigurationError
from app.services.orchestrator import (
    baseline_ulah,
    is_monotone,
    run_p1_ao,
    run_parameter_sweep,
    run_tradeoff_sweep,
    run_two_stage,
    sweep_frame,
    ulah_layout,
)


def test_is_monotone_allows_small_relative_dips():
    assert is_monotone([1.0, 2.0, 2.0])
    assert is_monotone([1.0, 0.9995])
    assert not is_monotone([1.0, 0.5])


def test_alternating_objective_never_decreases():
    scenario = small_scenario(array={"movement": "tx"})
    result = run_p1_ao(scenario)
    assert is_monotone(result.objective_trace, tolerance=1e-9)
    assert len(result.objective_trace) == result.iterations + 1
    assert result.layout.tx_positions[0] >= result.layout.tx_bounds[0]
    assert np.all(np.diff(result.layout.tx_positions) >= result.layout.min_spacing - 1e-12)
    assert result.aleph.shape == (3,)


def test_fixed_layout_is_left_alone():
    scenario = small_scenario(array={"movement": "none"})
    result = run_p1_ao(scenario)
    np.testing.assert_array_equal(result.layout.tx_positions, scenario.layout.tx_positions)
    np.testing.assert_array_equal(result.layout.rx_positions, scenario.layout.rx_positions)
    assert is_monotone(result.objective_trace, tolerance=1e-9)


def test_two_stage_records_every_slot():
    scenario = small_scenario(objective=QOS_OBJECTIVE, array={"movement": "none"}, run={"horizon_slots": 2})
    records = run_two_stage(scenario)
    assert [record.slot for record in records] == [1, 2]
    for record in records:
        assert record.feasible
        assert record.sum_rate > 0
        assert record.lpcrlb.shape == (2, 3)
        assert record.bounds_ordered(1e-6)
        np.testing.assert_allclose(record.pcrlb, record.covariance_diagonal, rtol=1e-9)
        assert record.swarm_evaluations == 0
    assert records[0].seeds["echo"] == [7, 1, 1]


def test_two_stage_reports_one_event_per_slot():
    scenario = small_scenario(objective=QOS_OBJECTIVE, array={"movement": "none"}, run={"horizon_slots": 2})
    events = []
    records = run_two_stage(scenario, progress=events.append)
    assert [event.slot for event in events] == [1, 2]
    for event, record in zip(events, records):
        assert event.sum_rate == pytest.approx(record.sum_rate)
        assert event.feasible is True
        assert event.constraint is None and event.margin is None


def test_two_stage_is_reproducible():
    scenario = small_scenario(objective=QOS_OBJECTIVE, array={"movement": "none"})
    first, second = run_two_stage(scenario), run_two_stage(scenario)
    np.testing.assert_array_equal(first[0].tracked_state, second[0].tracked_state)
    assert first[0].sum_rate == second[0].sum_rate


def test_two_stage_moves_the_transmit_array_with_the_swarm():
    scenario = small_scenario(objective=QOS_OBJECTIVE, array={"movement": "tx"})
    record = run_two_stage(scenario, record_timings=True)[0]
    assert record.swarm_evaluations > 0
    assert record.runtime_ms > 0
    assert np.all(np.diff(record.tx_positions) >= scenario.layout.min_spacing - 1e-12)
    np.testing.assert_array_equal(record.rx_positions, scenario.layout.rx_positions)


def test_two_stage_requires_thresholds():
    with pytest.raises(ConfigurationError):
        run_two_stage(small_scenario())


def test_ulah_baseline_keeps_a_half_wavelength_array():
    scenario = small_scenario()
    result = baseline_ulah(scenario)
    expected = ulah_layout(scenario.layout, scenario.system.wavelength)
    np.testing.assert_allclose(result.layout.tx_positions, expected.tx_positions)
    np.testing.assert_allclose(np.diff(result.layout.rx_positions), scenario.system.wavelength / 2)


def test_tradeoff_sweep_reports_one_point_per_rho():
    points = run_tradeoff_sweep(small_scenario(array={"movement": "none"}), [0.5, 1.0])
    assert [point.rho for point in points] == [0.5, 1.0]
    for point in points:
        assert point.sum_rate > 0
        assert np.all(point.lpcrlb <= point.pcrlb * (1 + 1e-6))
        assert point.sensing_metric >= point.pcrlb_metric * (1 - 1e-6)
    frame = sweep_frame(points)
    assert list(frame["rho"]) == [0.5, 1.0]
    assert {"lpcrlb_theta_0", "pcrlb_nu_1", "sensing_metric"} <= set(frame.columns)


def test_tradeoff_sweep_trades_rate_against_sensing():
    rhos = [0.0, 0.25, 0.5, 0.75, 1.0]
    points = run_tradeoff_sweep(small_scenario(array={"movement": "none"}), rhos)
    rates = np.array([point.sum_rate for point in points])
    sensing = np.array([point.sensing_metric for point in points])
    assert np.all(np.diff(rates) >= -1e-9 * np.abs(rates).max())
    assert np.all(np.diff(sensing) <= 1e-9 * np.abs(sensing).max())
    assert all(point.source_rho in rhos for point in points)


def test_tradeoff_sweep_rejects_rho_outside_unit_interval():
    with pytest.raises(ConfigurationError):
        run_tradeoff_sweep(small_scenario(), [1.5])


def test_parameter_sweep_over_power_budget():
    frame = run_parameter_sweep(small_scenario(array={"movement": "none"}), "total_power", [0.5, 1.0])
    assert list(frame["value"]) == [0.5, 1.0]
    assert frame["sum_rate"].iloc[1] > 0
    assert set(frame["parameter"]) == {"total_power"}


def test_parameter_sweep_rejects_unknown_parameter():
    with pytest.raises(ConfigurationError):
        run_parameter_sweep(small_scenario(), "num_tx", [4])

"""Command drivers shared by the CLI and the HTTP routes: run, tabulate, describe."""
from __future__ import annotations

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.schemas.optimization import AoResult, PowerMode
from app.schemas.scenario import Scenario
from app.services import channel_model
from app.services.export_service import PlotSeries, ResultBundle, run_metadata, slot_frame, trace_frame
from app.services.fisher_service import bound_sweep, bound_values, lcrlb, prior_blocks, prior_fim, zeta_fims
from app.services.orchestrator import (
    Progress,
    baseline_ulah,
    run_p1_ao,
    run_parameter_sweep,
    run_tradeoff_sweep,
    run_two_stage,
    sweep_frame,
)
from app.services.tracking_service import initial_track

logger = logging.getLogger(__name__)

SWEEP_SNR_DB = -5.0
DEFAULT_RHOS = tuple(np.round(np.linspace(0.0, 1.0, 11), 10))


# ----------------------------------------------------------------------
# Bounds
def scenario_bounds(scenario: Scenario) -> pd.DataFrame:
    """LCRLB and LPCRLB per vehicle at matched beams, uniform power and the initial-track prior."""
    system, layout, vehicles = scenario.system, scenario.layout, scenario.vehicles
    beams = channel_model.matched_beams(system, layout, vehicles, scenario.assignment)
    track = initial_track(scenario.true_states(), scenario.tracking, np.random.default_rng([scenario.seed, 0, 2]))
    priors = prior_blocks(prior_fim(track, scenario.motion))
    rows = []
    for k, (vehicle, fim) in enumerate(zip(vehicles, zeta_fims(system, layout, beams, vehicles))):
        plain = lcrlb(fim)
        posterior = bound_values(fim.with_prior(priors[k]))
        rows.append({
            "vehicle": k,
            "theta_deg": float(np.degrees(vehicle.theta)),
            "distance_m": vehicle.distance,
            "speed_mps": vehicle.speed,
            "lcrlb_theta": plain.theta,
            "lcrlb_d": plain.distance,
            "lcrlb_nu": plain.speed,
            "lpcrlb_theta": posterior[0],
            "lpcrlb_d": posterior[1],
            "lpcrlb_nu": posterior[2],
        })
    return pd.DataFrame(rows)


def parameter_bound_sweeps(scenario: Scenario, snr_db: float = SWEEP_SNR_DB) -> pd.DataFrame:
    """LCRLB of the last vehicle while M_rx, N or Q doubles, in both power modes."""
    system, layout = scenario.system, scenario.layout
    vehicle = scenario.vehicles[-1]
    grids = {
        "num_rx": [max(1, layout.num_rx // 2), layout.num_rx, 2 * layout.num_rx],
        "num_subcarriers": [max(1, system.num_subcarriers // 2), system.num_subcarriers, 2 * system.num_subcarriers],
        "num_blocks": [system.num_blocks, 2 * system.num_blocks, 4 * system.num_blocks],
    }
    frames = []
    for mode in (PowerMode.PER_SUBCARRIER, PowerMode.TOTAL):
        for parameter, values in grids.items():
            frame = bound_sweep(
                system, layout.num_tx, layout.num_rx, vehicle, parameter, values,
                snr_db=snr_db, power_mode=mode,
            )
            frame.insert(0, "power_mode", mode.value)
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def run_bounds(scenario: Scenario, *, provenance: Optional[Dict[str, Any]] = None) -> ResultBundle:
    table = scenario_bounds(scenario)
    sweeps = parameter_bound_sweeps(scenario)
    plots = {}
    subset = sweeps[sweeps["power_mode"] == PowerMode.PER_SUBCARRIER.value]
    for parameter, group in subset.groupby("parameter", sort=True):
        for column in ("lcrlb_theta", "lcrlb_d", "lcrlb_nu"):
            plots[f"{column}_vs_{parameter}"] = PlotSeries(group["value"], group[column], (parameter, column))
    return ResultBundle(
        command="bounds",
        tables={"bounds": table, "bound_sweeps": sweeps},
        metadata=run_metadata(scenario, "bounds", sweep_snr_db=SWEEP_SNR_DB, provenance=provenance or {}),
        plots=plots,
    )


# ----------------------------------------------------------------------
# Weighted sum
def _summary_row(scheme: str, scenario: Scenario, result: AoResult) -> Dict[str, Any]:
    rate = channel_model.sum_rate(scenario.system, result.layout, result.beams, scenario.vehicles)
    return {
        "scheme": scheme,
        "sum_rate_bits": rate,
        "mean_subcarrier_rate_bits": rate / scenario.system.num_subcarriers,
        "objective": result.objective_trace[-1],
        "iterations": result.iterations,
        "converged": result.converged,
        "rejected_steps": result.rejected_steps,
    }


def _layout_frame(result: AoResult) -> pd.DataFrame:
    layout = result.layout
    return pd.DataFrame({
        "array": ["tx"] * layout.num_tx + ["rx"] * layout.num_rx,
        "index": list(range(layout.num_tx)) + list(range(layout.num_rx)),
        "position_m": np.concatenate([layout.tx_positions, layout.rx_positions]),
    })


def run_weighted(
    scenario: Scenario,
    *,
    baseline: bool = False,
    provenance: Optional[Dict[str, Any]] = None,
    progress: Optional[Progress] = None,
) -> ResultBundle:
    result = run_p1_ao(scenario, progress=progress)
    rows = [_summary_row("ma", scenario, result)]
    if baseline:
        rows.append(_summary_row("ulah", scenario, baseline_ulah(scenario, progress=progress)))
    powers = pd.DataFrame({
        "subcarrier": np.arange(scenario.system.num_subcarriers),
        "vehicle": result.beams.assignment,
        "power_w": result.beams.powers,
        "rate_bits": channel_model.subcarrier_rates(scenario.system, result.layout, result.beams, scenario.vehicles),
    })
    trace = trace_frame(result)
    summary = rows[0]
    return ResultBundle(
        command="optimize-weighted",
        tables={
            "weighted_summary": pd.DataFrame(rows),
            "objective_trace": trace,
            "layout": _layout_frame(result),
            "powers": powers,
        },
        metadata=run_metadata(
            scenario, "optimize-weighted",
            rho=scenario.objective.rho,
            aleph=result.aleph,
            iterations=result.iterations,
            converged=result.converged,
            provenance=provenance or {},
        ),
        plots={"objective_trace": PlotSeries(trace["iteration"], trace["objective"], ("iteration", "objective"))},
        sum_rate=summary["sum_rate_bits"],
        objective=summary["objective"],
        iterations=result.iterations,
    )


# ----------------------------------------------------------------------
# QoS tracking
def run_qos(
    scenario: Scenario,
    *,
    baseline: bool = False,
    record_timings: bool = False,
    provenance: Optional[Dict[str, Any]] = None,
    progress: Optional[Progress] = None,
) -> ResultBundle:
    records = run_two_stage(scenario, record_timings=record_timings, progress=progress)
    frame = slot_frame(records)
    tables = {"slots": frame}
    plots = {"sum_rate_vs_slot": PlotSeries(frame["slot"], frame["sum_rate_bits"], ("slot", "sum_rate_bits"))}
    for k in range(scenario.num_vehicles):
        for name in ("theta", "d", "nu"):
            column = f"lpcrlb_{name}_{k}"
            plots[f"{column}_vs_slot"] = PlotSeries(frame["slot"], frame[column], ("slot", column))
    if baseline:
        reference = slot_frame(baseline_ulah(scenario, progress=progress))
        tables["slots_ulah"] = reference
        plots["sum_rate_ulah_vs_slot"] = PlotSeries(reference["slot"], reference["sum_rate_bits"], ("slot", "sum_rate_bits"))
    infeasible = [record.slot for record in records if not record.feasible]
    return ResultBundle(
        command="optimize-qos",
        tables=tables,
        metadata=run_metadata(
            scenario, "optimize-qos",
            thresholds=scenario.objective.thresholds,
            horizon=scenario.horizon,
            infeasible_slots=infeasible,
            sca_iterations=[record.sca_iterations for record in records],
            swarm_evaluations=[record.swarm_evaluations for record in records],
            provenance=provenance or {},
        ),
        plots=plots,
        sum_rate=records[-1].sum_rate,
        objective=records[-1].objective,
        iterations=len(records),
        infeasible=bool(infeasible),
    )


def run_track(
    scenario: Scenario,
    *,
    record_timings: bool = False,
    provenance: Optional[Dict[str, Any]] = None,
    progress: Optional[Progress] = None,
) -> ResultBundle:
    """Two-stage loop reported as a tracking log: estimate, covariance and bounds per slot."""
    records = run_two_stage(scenario, record_timings=record_timings, progress=progress)
    frame = slot_frame(records)
    for k in range(scenario.num_vehicles):
        for index, name in enumerate(("theta", "d", "nu")):
            frame[f"cov_diag_{name}_{k}"] = [record.covariance_diagonal[k, index] for record in records]
    plots = {}
    for k in range(scenario.num_vehicles):
        for name in ("theta", "d", "nu"):
            plots[f"pcrlb_{name}_{k}_vs_slot"] = PlotSeries(frame["slot"], frame[f"pcrlb_{name}_{k}"], ("slot", f"pcrlb_{name}_{k}"))
    infeasible = [record.slot for record in records if not record.feasible]
    return ResultBundle(
        command="track",
        tables={"track": frame},
        metadata=run_metadata(scenario, "track", horizon=scenario.horizon, infeasible_slots=infeasible, provenance=provenance or {}),
        plots=plots,
        sum_rate=records[-1].sum_rate,
        objective=records[-1].objective,
        iterations=len(records),
        infeasible=bool(infeasible),
    )


# ----------------------------------------------------------------------
# Sweeps
def run_sweep(
    scenario: Scenario,
    *,
    rhos: Sequence[float] = DEFAULT_RHOS,
    parameter: Optional[str] = None,
    values: Optional[Sequence[float]] = None,
    provenance: Optional[Dict[str, Any]] = None,
    progress: Optional[Progress] = None,
) -> ResultBundle:
    """ρ trade-off curve, or a sum-rate curve over `parameter` when one is named."""
    if parameter is not None:
        frame = run_parameter_sweep(scenario, parameter, values or [], progress=progress)
        return ResultBundle(
            command="sweep",
            tables={f"sweep_{parameter}": frame},
            metadata=run_metadata(scenario, "sweep", parameter=parameter, values=list(values or []), provenance=provenance or {}),
            plots={f"sum_rate_vs_{parameter}": PlotSeries(frame["value"], frame["sum_rate"], (parameter, "sum_rate_bits"))},
        )
    points = run_tradeoff_sweep(scenario, rhos, progress=progress)
    frame = sweep_frame(points)
    plots: Dict[str, PlotSeries] = {
        "sum_rate_vs_sensing": PlotSeries(frame["sensing_metric"], frame["sum_rate"], ("sensing_metric", "sum_rate_bits")),
        "sum_rate_vs_pcrlb_sensing": PlotSeries(frame["pcrlb_metric"], frame["sum_rate"], ("pcrlb_metric", "sum_rate_bits")),
        "sum_rate_vs_rho": PlotSeries(frame["rho"], frame["sum_rate"], ("rho", "sum_rate_bits")),
    }
    for column in [name for name in frame.columns if name.startswith(("lpcrlb_", "pcrlb_"))]:
        plots[f"{column}_vs_rho"] = PlotSeries(frame["rho"], frame[column], ("rho", column))
    return ResultBundle(
        command="sweep",
        tables={"tradeoff": frame},
        metadata=run_metadata(scenario, "sweep", rhos=list(rhos), provenance=provenance or {}),
        plots=plots,
    )


def describe_bundle(bundle: ResultBundle) -> List[str]:
    """Short human summary used by `report` and the CLI's stderr log."""
    lines = [f"{bundle.command}: {', '.join(sorted(bundle.tables))}"]
    if bundle.sum_rate is not None:
        lines.append(f"sum-rate {bundle.sum_rate:.6g} bits/symbol")
    if bundle.objective is not None:
        lines.append(f"objective {bundle.objective:.6g}")
    if bundle.infeasible:
        lines.append("at least one slot missed its QoS thresholds")
    return lines

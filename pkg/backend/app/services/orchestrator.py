"""Top-level control: the alternating weighted-sum loop, the two-stage tracking loop and the sweeps.

Every run is a pure function of its Scenario: random streams are derived
from `scenario.seed` and the slot index, never from global state.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import replace
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from app.core.errors import ConfigurationError, InfeasibleProblemError
from app.schemas.core import ArrayLayout, BeamformerSet, VehicleState, vehicles_from_array
from app.schemas.optimization import AoResult, Movement, ObjectiveMode
from app.schemas.scenario import ProgressEvent, Scenario, SlotInputs, SlotRecord, SweepPoint
from app.schemas.tracking import TrackState
from app.services import channel_model
from app.services.antenna_service import pga_rx, pga_tx
from app.services.beamforming_service import sca_solve_qos, sca_solve_weighted
from app.services.fisher_service import bound_values, fim_zeta, pcrlb_diag, prior_blocks, prior_fim
from app.services.kinematics import propagate_state
from app.services.objective import (
    aleph_factors,
    bound_ratios,
    information_matrices,
    tightest_constraint,
    weighted_objective,
)
from app.services.power_service import power_problem, solve_power_qos, solve_power_weighted, waterfill
from app.services.swarm_service import SlotContext, optimize_layout
from app.services.tracking_service import ekf_step, initial_track, predict_track

logger = logging.getLogger(__name__)

Progress = Callable[[ProgressEvent], None]

MOTION_STREAM = 0
ECHO_STREAM = 1
INIT_STREAM = 2


def _notify(progress: Optional[Progress], event: ProgressEvent) -> None:
    logger.info(event.message)
    if progress is not None:
        progress(event)


def _stream(scenario: Scenario, slot: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([scenario.seed, slot, stream])


def ulah_layout(layout: ArrayLayout, wavelength: float) -> ArrayLayout:
    """Half-wavelength ULA anchored at the lower end of both regions of `layout`."""
    spacing = max(wavelength / 2, layout.min_spacing)
    return replace(
        layout,
        tx_positions=layout.tx_bounds[0] + np.arange(layout.num_tx) * spacing,
        rx_positions=layout.rx_bounds[0] + np.arange(layout.num_rx) * spacing,
        checked=True,
    )


# ----------------------------------------------------------------------
# Alternating optimisation of the weighted sum
def run_p1_ao(
    scenario: Scenario,
    slot_inputs: Optional[SlotInputs] = None,
    *,
    rho: Optional[float] = None,
    aleph: Optional[np.ndarray] = None,
    movement: Optional[Movement] = None,
    progress: Optional[Progress] = None,
) -> AoResult:
    """Beams → powers → transmit positions → receive positions until the objective settles.

    Each step is kept only if it does not lower the true weighted objective;
    refused steps are counted in `rejected_steps`.
    """
    inputs = slot_inputs or SlotInputs(vehicles=list(scenario.vehicles))
    system, settings = scenario.system, scenario.solver
    rho = scenario.objective.rho if rho is None else float(rho)
    movement = scenario.movement if movement is None else movement
    vehicles, priors = inputs.vehicles, inputs.priors
    layout = inputs.layout or scenario.layout
    beams = inputs.beams or channel_model.matched_beams(system, layout, vehicles, scenario.assignment)
    if aleph is None:
        aleph = aleph_factors(
            scenario.objective.aleph_policy,
            information_matrices(system, layout, beams, vehicles, priors),
            scenario.objective.aleph,
        )
    aleph = np.asarray(aleph, dtype=float).reshape(3)

    def objective(current_layout: ArrayLayout, current_beams: BeamformerSet) -> float:
        return weighted_objective(system, current_layout, current_beams, vehicles, rho, aleph, priors)

    value = objective(layout, beams)
    trace = [value]
    rejected = 0
    converged = False
    iteration = 0
    for iteration in range(1, settings.max_outer_iterations + 1):
        previous = value

        solution = sca_solve_weighted(
            system, layout, beams.powers, vehicles, rho, aleph, beams, priors=priors, settings=settings
        )
        candidate = beams.with_beams(solution.beams)
        candidate_value = objective(layout, candidate)
        if candidate_value >= value:
            beams, value = candidate, candidate_value
        else:
            rejected += 1
            logger.info("Beamforming step rejected at iteration %d (%.6g < %.6g).", iteration, candidate_value, value)

        problem = power_problem(system, layout, beams, vehicles, priors)
        allocation = solve_power_weighted(problem, rho, aleph, reference=beams.powers)
        candidate = beams.with_powers(allocation.powers)
        candidate_value = objective(layout, candidate)
        if candidate_value >= value:
            beams, value = candidate, candidate_value
        else:
            rejected += 1
            logger.info("Power step rejected at iteration %d (%.6g < %.6g).", iteration, candidate_value, value)

        if movement.moves_tx:
            moved = pga_tx(system, layout, beams, vehicles, rho, aleph, scenario.pga, priors=priors)
            layout = layout.with_tx(moved.positions)
            value = objective(layout, beams)
        if movement.moves_rx:
            moved = pga_rx(system, layout, beams, vehicles, scenario.pga)
            layout = layout.with_rx(moved.positions)
            value = objective(layout, beams)

        trace.append(value)
        logger.debug("Outer iteration %d: objective %.10g", iteration, value)
        if abs(value - previous) <= settings.outer_tolerance * max(1.0, abs(previous)):
            converged = True
            break

    _notify(progress, ProgressEvent(
        f"Alternating optimisation finished after {iteration} iterations (objective {value:.6g}).",
        objective=value,
    ))
    return AoResult(
        layout=layout,
        beams=beams,
        objective_trace=trace,
        iterations=iteration,
        converged=converged,
        aleph=aleph,
        rejected_steps=rejected,
    )


# ----------------------------------------------------------------------
# Two-stage tracking loop
def _rate_only_refit(scenario: Scenario, layout: ArrayLayout, vehicles: List[VehicleState], priors: np.ndarray) -> BeamformerSet:
    system = scenario.system
    init = channel_model.matched_beams(system, layout, vehicles, scenario.assignment)
    solution = sca_solve_weighted(
        system, layout, init.powers, vehicles, 1.0, np.zeros(3), init, priors=priors, settings=scenario.solver
    )
    beams = init.with_beams(solution.beams)
    gains = channel_model.effective_gains(system, layout, beams, vehicles)
    return beams.with_powers(waterfill(gains, system.total_power).powers)


def _qos_refit(scenario: Scenario, layout: ArrayLayout, vehicles: List[VehicleState], priors: np.ndarray) -> tuple[BeamformerSet, int]:
    system, thresholds = scenario.system, scenario.objective.thresholds
    init = channel_model.matched_beams(system, layout, vehicles, scenario.assignment)
    solution = sca_solve_qos(
        system, layout, init.powers, vehicles, thresholds, init, priors=priors, settings=scenario.solver
    )
    beams = init.with_beams(solution.beams)
    problem = power_problem(system, layout, beams, vehicles, priors, thresholds)
    allocation = solve_power_qos(problem, backend=scenario.solver.backend)
    return beams.with_powers(allocation.powers), solution.iterations


def warm_start_positions(
    scenario: Scenario, vehicles: List[VehicleState], priors: np.ndarray, layout: ArrayLayout
) -> np.ndarray:
    """Transmit positions of a rate-only alternating run, the swarm's warm start."""
    result = run_p1_ao(
        scenario,
        SlotInputs(vehicles=vehicles, priors=priors, layout=layout),
        rho=1.0,
        aleph=np.zeros(3),
        movement=Movement.TX,
    )
    return result.layout.tx_positions


def run_two_stage(
    scenario: Scenario,
    *,
    record_timings: bool = False,
    progress: Optional[Progress] = None,
) -> List[SlotRecord]:
    """Predict, pre-optimise the transmit layout, advance the truth, refit, measure and update."""
    if scenario.objective.mode != ObjectiveMode.QOS:
        raise ConfigurationError("The two-stage loop needs QoS thresholds.", field="objective")
    system, thresholds = scenario.system, scenario.objective.thresholds
    truth = scenario.true_states()
    track: TrackState = initial_track(truth, scenario.tracking, _stream(scenario, 0, INIT_STREAM))
    layout = scenario.layout
    records: List[SlotRecord] = []

    for slot in range(1, scenario.horizon + 1):
        started = time.perf_counter()
        predicted, prior = predict_track(track, scenario.motion)
        priors = prior_blocks(prior)
        estimated = vehicles_from_array(predicted)

        candidate_layout = layout
        evaluations = 0
        if scenario.movement.moves_tx:
            template = channel_model.matched_beams(system, layout, estimated, scenario.assignment)
            context = SlotContext(
                system=system, layout=layout, vehicles=estimated, thresholds=thresholds,
                beams=template, priors=priors, settings=scenario.solver,
            )
            warm = None
            if scenario.swarm.warm_start:
                warm = warm_start_positions(scenario, estimated, priors, layout)
            swarm = replace(scenario.swarm, seed=scenario.swarm.seed + slot - 1)
            try:
                result = optimize_layout(context, swarm, warm_start=warm)
                candidate_layout = layout.with_tx(result.position)
                evaluations = result.evaluations
            except InfeasibleProblemError as exc:
                logger.warning("Slot %d: swarm found no feasible layout (%s); keeping the previous one.", slot, exc)

        truth = propagate_state(truth, scenario.motion, rng=_stream(scenario, slot, MOTION_STREAM))
        true_vehicles = vehicles_from_array(truth)

        feasible = True
        try:
            beams, sca_iterations = _qos_refit(scenario, candidate_layout, estimated, priors)
            layout = candidate_layout
        except InfeasibleProblemError as exc:
            logger.warning("Slot %d: QoS refit infeasible (%s); rate-only refit on the previous layout.", slot, exc)
            feasible = False
            sca_iterations = 0
            beams = _rate_only_refit(scenario, layout, estimated, priors)

        matrices = information_matrices(system, layout, beams, estimated, priors)
        ratios = bound_ratios(matrices, thresholds)
        tightest = tightest_constraint(ratios)
        if feasible:
            feasible = bool(np.all(ratios <= 1.0 + scenario.solver.qos_slack))
        echo = channel_model.synth_echo(
            system, layout, beams, true_vehicles, _stream(scenario, slot, ECHO_STREAM),
            noise=scenario.tracking.echo_noise,
        )
        track = ekf_step(track, echo, system, layout, beams, scenario.motion)
        rate = channel_model.sum_rate(system, layout, beams, true_vehicles)
        elapsed = (time.perf_counter() - started) * 1e3 if record_timings else 0.0
        records.append(SlotRecord(
            slot=slot,
            true_state=truth.copy(),
            predicted_state=np.asarray(predicted, dtype=float),
            tracked_state=track.estimate.copy(),
            tx_positions=layout.tx_positions.copy(),
            rx_positions=layout.rx_positions.copy(),
            sum_rate=rate,
            predicted_sum_rate=channel_model.sum_rate(system, layout, beams, estimated),
            lpcrlb=np.stack([bound_values(matrix) for matrix in matrices]),
            pcrlb=pcrlb_diag(track.observed_information, track.prior_information),
            covariance_diagonal=np.diag(track.covariance).reshape(-1, 3),
            objective=rate,
            feasible=feasible,
            sca_iterations=sca_iterations,
            swarm_evaluations=evaluations,
            seeds={
                "scenario": scenario.seed,
                "motion": [scenario.seed, slot, MOTION_STREAM],
                "echo": [scenario.seed, slot, ECHO_STREAM],
                "swarm": scenario.swarm.seed + slot - 1,
            },
            runtime_ms=elapsed,
        ))
        _notify(progress, ProgressEvent(
            f"Slot {slot}/{scenario.horizon}: sum-rate {rate:.6g} bits, feasible={feasible}.",
            slot=slot,
            sum_rate=rate,
            feasible=feasible,
            constraint=None if feasible else tightest[0],
            margin=None if feasible else tightest[1],
        ))
    return records


def baseline_ulah(scenario: Scenario, *, progress: Optional[Progress] = None):
    """The same run with a fixed half-wavelength ULA: SlotRecords in QoS mode, an AoResult otherwise."""
    fixed = replace(
        scenario,
        layout=ulah_layout(scenario.layout, scenario.system.wavelength),
        movement=Movement.NONE,
    )
    if scenario.objective.mode == ObjectiveMode.QOS:
        return run_two_stage(fixed, progress=progress)
    return run_p1_ao(fixed, progress=progress)


# ----------------------------------------------------------------------
# Sweeps
def _information_metric(bounds: np.ndarray, aleph: np.ndarray) -> float:
    """Σ_k ℵ·(1/bound); an unbounded parameter contributes nothing."""
    bounds = np.asarray(bounds, dtype=float)
    information = np.zeros_like(bounds)
    finite = np.isfinite(bounds) & (bounds > 0)
    information[finite] = 1.0 / bounds[finite]
    return float(np.sum(information @ aleph))


def run_tradeoff_sweep(
    scenario: Scenario,
    rhos: Sequence[float],
    *,
    progress: Optional[Progress] = None,
) -> List[SweepPoint]:
    """One alternating run per ρ with ℵ and the prior frozen at the initial track.

    `sensing_metric` is the ℵ-weighted information implied by the LPCRLBs,
    `pcrlb_metric` the same quantity from the full PCRLB diagonal. Each ρ
    reports the best design found by any of the runs under its own weighted
    objective, so the sum-rate never falls and the sensing metric never rises
    as ρ grows.
    """
    values = [float(rho) for rho in rhos]
    if any(not 0.0 <= rho <= 1.0 for rho in values):
        raise ConfigurationError("Every rho must lie in [0, 1].", field="rho")
    system, vehicles = scenario.system, list(scenario.vehicles)
    start = channel_model.matched_beams(system, scenario.layout, vehicles, scenario.assignment)
    aleph = aleph_factors(
        scenario.objective.aleph_policy,
        information_matrices(system, scenario.layout, start, vehicles),
        scenario.objective.aleph,
    )
    track = initial_track(scenario.true_states(), scenario.tracking, _stream(scenario, 0, INIT_STREAM))
    prior = prior_fim(track, scenario.motion)
    priors = prior_blocks(prior)
    inputs = SlotInputs(vehicles=vehicles, priors=priors)

    candidates = []
    for rho in values:
        result = run_p1_ao(scenario, inputs, rho=rho, aleph=aleph)
        matrices = information_matrices(system, result.layout, result.beams, vehicles, priors)
        lower = np.stack([bound_values(matrix) for matrix in matrices])
        candidates.append({
            "rho": rho,
            "result": result,
            "sum_rate": channel_model.sum_rate(system, result.layout, result.beams, vehicles),
            "sensing": _information_metric(lower, aleph),
            "lower": lower,
        })
        _notify(progress, ProgressEvent(
            f"Trade-off run rho={rho:.3g}: sum-rate {candidates[-1]['sum_rate']:.6g} bits.",
            objective=result.objective_trace[-1],
            sum_rate=candidates[-1]["sum_rate"],
        ))

    points = []
    for rho in values:
        scores = [rho * item["sum_rate"] + (1.0 - rho) * item["sensing"] for item in candidates]
        best = candidates[int(np.argmax(scores))]
        if best["rho"] != rho:
            logger.info("rho=%.3g keeps the design found at rho=%.3g.", rho, best["rho"])
        result = best["result"]
        upper = pcrlb_diag(fim_zeta(system, result.layout, result.beams, vehicles), prior)
        points.append(SweepPoint(
            rho=rho,
            sum_rate=best["sum_rate"],
            sensing_metric=best["sensing"],
            pcrlb_metric=_information_metric(upper, aleph),
            lpcrlb=best["lower"],
            pcrlb=upper,
            objective=max(scores),
            iterations=result.iterations,
            source_rho=best["rho"],
        ))
    return points


def sweep_frame(points: Sequence[SweepPoint]) -> pd.DataFrame:
    rows = []
    for point in points:
        row = {
            "rho": point.rho,
            "sum_rate": point.sum_rate,
            "sensing_metric": point.sensing_metric,
            "pcrlb_metric": point.pcrlb_metric,
            "objective": point.objective,
            "iterations": point.iterations,
            "source_rho": point.source_rho,
        }
        for k, (lower, upper) in enumerate(zip(point.lpcrlb, point.pcrlb)):
            for name, low, high in zip(("theta", "d", "nu"), lower, upper):
                row[f"lpcrlb_{name}_{k}"] = low
                row[f"pcrlb_{name}_{k}"] = high
        rows.append(row)
    return pd.DataFrame(rows)


SWEEP_PARAMETERS = ("total_power", "region_length_lambda")


def run_parameter_sweep(
    scenario: Scenario,
    parameter: str,
    values: Sequence[float],
    *,
    progress: Optional[Progress] = None,
) -> pd.DataFrame:
    """Weighted-sum runs while the power budget or the region length (in λ) varies."""
    if parameter not in SWEEP_PARAMETERS:
        raise ConfigurationError(f"Unknown sweep parameter {parameter!r}; expected one of {SWEEP_PARAMETERS}.")
    rows = []
    for value in values:
        value = float(value)
        if parameter == "total_power":
            current = replace(scenario, system=replace(scenario.system, total_power=value))
        else:
            layout = scenario.layout
            wavelength = scenario.system.wavelength
            current = replace(scenario, layout=ArrayLayout.half_wavelength(
                wavelength, layout.num_tx, layout.num_rx, value * wavelength,
                min_spacing=layout.min_spacing, tx_rx_gap=layout.tx_rx_gap,
            ))
        result = run_p1_ao(current)
        rate = channel_model.sum_rate(current.system, result.layout, result.beams, current.vehicles)
        rows.append({
            "parameter": parameter,
            "value": value,
            "sum_rate": rate,
            "objective": result.objective_trace[-1],
            "iterations": result.iterations,
            "converged": result.converged,
        })
        _notify(progress, ProgressEvent(
            f"{parameter}={value:.6g}: sum-rate {rate:.6g} bits.",
            objective=result.objective_trace[-1],
            sum_rate=rate,
        ))
    return pd.DataFrame(rows)


def is_monotone(trace: Sequence[float], tolerance: float = 1e-3) -> bool:
    """Nondecreasing up to `tolerance` relative per step."""
    return all(
        later >= earlier - tolerance * max(1.0, abs(earlier))
        for earlier, later in zip(trace, trace[1:])
        if math.isfinite(earlier) and math.isfinite(later)
    )

"""Reflective projected dynamic particle swarm over the transmit antenna positions.

Fitness is minimised: the negative QoS-constrained sum-rate at a position plus
a penalty per antenna pair closer than the minimum spacing.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigurationError, IsacError, InfeasibleProblemError
from app.schemas.core import ArrayLayout, BeamformerSet, SystemConfig, VehicleState, spacing_violations
from app.schemas.optimization import (
    Particle,
    QosThresholds,
    SolverSettings,
    SwarmConfig,
    SwarmResult,
)
from app.services import channel_model
from app.services.beamforming_service import sca_solve_qos
from app.services.power_service import power_problem, solve_power_qos

logger = logging.getLogger(__name__)

Bounds = Tuple[float, float]
Evaluation = Tuple[float, float, Optional[BeamformerSet]]


@dataclass(eq=False)
class SlotContext:
    """Inputs of one inner solve: predicted vehicles, priors and the incumbent beams."""

    system: SystemConfig
    layout: ArrayLayout
    vehicles: List[VehicleState]
    thresholds: QosThresholds
    beams: BeamformerSet
    priors: Optional[np.ndarray] = None
    settings: SolverSettings = field(default_factory=SolverSettings)


def inner_solve(context: SlotContext, positions: Sequence[float]) -> Tuple[float, BeamformerSet]:
    """Sum-rate after QoS beamforming then QoS power allocation at `positions`."""
    layout = context.layout.with_tx(np.sort(np.asarray(positions, dtype=float)), checked=False)
    init = channel_model.matched_beams(
        context.system, layout, context.vehicles, context.beams.assignment, context.beams.powers
    )
    solution = sca_solve_qos(
        context.system, layout, init.powers, context.vehicles, context.thresholds, init,
        priors=context.priors, settings=context.settings,
    )
    beams = init.with_beams(solution.beams)
    problem = power_problem(context.system, layout, beams, context.vehicles, context.priors, context.thresholds)
    allocation = solve_power_qos(problem, backend=context.settings.backend)
    beams = beams.with_powers(allocation.powers)
    return channel_model.sum_rate(context.system, layout, beams, context.vehicles), beams


def fitness(
    position: Sequence[float],
    context: SlotContext,
    penalty: float,
) -> Evaluation:
    """(fitness, sum-rate, beams); failed inner solves score +inf."""
    violations = spacing_violations(position, context.layout.min_spacing)
    try:
        rate, beams = inner_solve(context, position)
    except (IsacError, ArithmeticError) as exc:
        logger.debug("Inner solve failed at %s: %s", np.round(position, 6), exc)
        return math.inf, 0.0, None
    return -rate + penalty * violations, rate, beams


class FitnessEvaluator:
    """Caches fitness on positions quantised to λ/1000 and counts evaluations."""

    def __init__(self, evaluate: Callable[[np.ndarray], Evaluation], resolution: float) -> None:
        self._evaluate = evaluate
        self._resolution = resolution
        self._cache: Dict[Tuple[int, ...], Evaluation] = {}
        self.evaluations = 0

    def __call__(self, position: np.ndarray) -> Evaluation:
        key = tuple(int(value) for value in np.round(np.asarray(position) / self._resolution))
        if key not in self._cache:
            self.evaluations += 1
            self._cache[key] = self._evaluate(np.asarray(position, dtype=float))
        return self._cache[key]


# ----------------------------------------------------------------------
# Swarm dynamics
def inertia(iteration: int, config: SwarmConfig) -> float:
    if config.iterations == 0:
        return config.inertia_max
    return config.inertia_max - (iteration / config.iterations) * (config.inertia_max - config.inertia_min)


def update_particle(
    particle: Particle,
    global_best: np.ndarray,
    iteration: int,
    config: SwarmConfig,
    rng: np.random.Generator,
    bounds: Bounds,
) -> Particle:
    """Velocity/position update with clamping and attenuated reflection at the box."""
    low, high = bounds
    cognitive = rng.uniform(size=particle.position.size)
    social = rng.uniform(size=particle.position.size)
    velocity = (
        inertia(iteration, config) * particle.velocity
        + config.cognitive * cognitive * (particle.best_position - particle.position)
        + config.social * social * (np.asarray(global_best, dtype=float) - particle.position)
    )
    limit = config.velocity_scale * (high - low)
    velocity = np.clip(velocity, -limit, limit)
    moved = particle.position + velocity
    outside = (moved < low) | (moved > high)
    particle.position = np.clip(moved, low, high)
    velocity[outside] = -config.reflection_scale * velocity[outside]
    particle.velocity = velocity
    return particle


def prune_and_replenish(
    particles: List[Particle],
    global_best: np.ndarray,
    config: SwarmConfig,
    rng: np.random.Generator,
    bounds: Bounds,
    spacing: float,
    evaluate: Callable[[np.ndarray], Evaluation],
) -> List[Particle]:
    """Deactivate far particles while more than N_th are active; refill to N_th around retained bests."""
    low, high = bounds
    active = [particle for particle in particles if particle.active]
    dimension = np.asarray(global_best).size
    threshold = config.prune_scale * (high - low) * math.sqrt(dimension)
    if len(active) > config.retention_threshold:
        for particle in active:
            if np.linalg.norm(particle.position - global_best) > threshold:
                particle.active = False
        active = [particle for particle in particles if particle.active]

    next_index = max((particle.index for particle in particles), default=-1) + 1
    while len(active) < config.retention_threshold:
        anchor = active[int(rng.integers(len(active)))].best_position if active else np.asarray(global_best)
        position = np.clip(anchor + rng.uniform(-spacing, spacing, size=dimension), low, high)
        spawned = Particle(
            position=position, velocity=np.zeros(dimension), best_position=position, index=next_index
        )
        spawned.record(evaluate(position)[0])
        particles.append(spawned)
        active.append(spawned)
        next_index += 1
    return particles


def _initial_positions(
    layout: ArrayLayout, config: SwarmConfig, rng: np.random.Generator, warm_start: Optional[np.ndarray]
) -> List[np.ndarray]:
    low, high = layout.tx_bounds
    ula = low + np.arange(layout.num_tx) * layout.min_spacing
    positions = [ula]
    if warm_start is not None and config.warm_start:
        positions.append(np.clip(np.asarray(warm_start, dtype=float), low, high))
    while len(positions) < config.particles:
        positions.append(np.sort(rng.uniform(low, high, size=layout.num_tx)))
    return positions


def run_rpdpso(
    layout: ArrayLayout,
    config: SwarmConfig,
    evaluate: Callable[[np.ndarray], Evaluation],
    *,
    warm_start: Optional[np.ndarray] = None,
    resolution: Optional[float] = None,
) -> SwarmResult:
    """Minimise `evaluate` over the transmit box; the result is penalty-free and sorted."""
    bounds = layout.tx_bounds
    evaluator = FitnessEvaluator(evaluate, resolution or layout.min_spacing / 500)
    rng = np.random.default_rng([config.seed, 0, 0])
    particles = [
        Particle(position=position, velocity=np.zeros(layout.num_tx), best_position=position, index=index)
        for index, position in enumerate(_initial_positions(layout, config, rng, warm_start))
    ]
    for particle in particles:
        particle.record(evaluator(particle.position)[0])

    def leader() -> Particle:
        return min(particles, key=lambda particle: (particle.best_fitness, particle.index))

    best = leader()
    best_position, best_fitness = best.best_position.copy(), best.best_fitness
    trace = [best_fitness]
    for iteration in range(1, config.iterations + 1):
        for particle in particles:
            if not particle.active:
                continue
            particle_rng = np.random.default_rng([config.seed, particle.index + 1, iteration])
            update_particle(particle, best_position, iteration, config, particle_rng, bounds)
            particle.record(evaluator(particle.position)[0])
        best = leader()
        if best.best_fitness < best_fitness:
            best_position, best_fitness = best.best_position.copy(), best.best_fitness
        prune_rng = np.random.default_rng([config.seed, 0, iteration])
        prune_and_replenish(particles, best_position, config, prune_rng, bounds, layout.min_spacing, evaluator)
        best = leader()
        if best.best_fitness < best_fitness:
            best_position, best_fitness = best.best_position.copy(), best.best_fitness
        trace.append(best_fitness)
        logger.debug("Swarm iteration %d: best fitness %.6g", iteration, best_fitness)

    feasible = [
        particle for particle in particles
        if math.isfinite(particle.best_fitness)
        and spacing_violations(particle.best_position, layout.min_spacing) == 0
    ]
    if not feasible:
        raise InfeasibleProblemError("No particle reached a feasible, penalty-free antenna layout.")
    chosen = min(feasible, key=lambda particle: (particle.best_fitness, particle.index))
    _, rate, beams = evaluator(chosen.best_position)
    return SwarmResult(
        position=np.sort(chosen.best_position),
        fitness=chosen.best_fitness,
        fitness_trace=trace,
        evaluations=evaluator.evaluations,
        sum_rate=rate,
        beams=beams,
    )


def optimize_layout(
    context: SlotContext,
    config: SwarmConfig,
    *,
    warm_start: Optional[np.ndarray] = None,
) -> SwarmResult:
    """Swarm search with the QoS inner solve as fitness."""
    if context.layout.num_tx < 1:
        raise ConfigurationError("The transmit array needs at least one antenna.")
    return run_rpdpso(
        context.layout,
        config,
        lambda position: fitness(position, context, config.penalty),
        warm_start=warm_start,
        resolution=context.system.wavelength / 1000,
    )

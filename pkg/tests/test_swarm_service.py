import math

import numpy as np
import pytest

from app.core.errors import InfeasibleProblemError
from app.schemas.core import ArrayLayout, spacing_violations
from app.schemas.optimization import Particle, SwarmConfig
from app.services.swarm_service import (
    FitnessEvaluator,
    inertia,
    prune_and_replenish,
    run_rpdpso,
    update_particle,
)

WAVELENGTH = 0.01
LAYOUT = ArrayLayout.half_wavelength(WAVELENGTH, 3, 2, 4 * WAVELENGTH)
TARGET = np.array([0.5, 1.8, 3.1]) * WAVELENGTH


def _quadratic(position):
    value = float(np.sum((np.sort(position) - TARGET) ** 2)) / WAVELENGTH ** 2
    value += 50.0 * spacing_violations(position, LAYOUT.min_spacing)
    return value, -value, None


def test_inertia_decreases_linearly():
    config = SwarmConfig(iterations=10, inertia_min=0.4, inertia_max=0.9)
    assert inertia(0, config) == pytest.approx(0.9)
    assert inertia(5, config) == pytest.approx(0.65)
    assert inertia(10, config) == pytest.approx(0.4)


def test_particle_update_stays_in_the_box_and_reflects():
    config = SwarmConfig(velocity_scale=1.0, reflection_scale=0.5)
    particle = Particle(position=[0.0, 0.01], velocity=[-1.0, 1.0], best_position=[0.0, 0.01])
    update_particle(particle, np.array([0.0, 0.01]), 1, config, np.random.default_rng(0), (0.0, 0.02))
    assert np.all((particle.position >= 0.0) & (particle.position <= 0.02))
    assert particle.velocity[0] > 0 and particle.velocity[1] < 0


def test_evaluator_caches_quantised_positions():
    calls = []

    def evaluate(position):
        calls.append(position)
        return 1.0, 0.0, None

    evaluator = FitnessEvaluator(evaluate, 1e-5)
    evaluator(np.array([0.001, 0.002]))
    evaluator(np.array([0.001 + 1e-7, 0.002]))
    assert evaluator.evaluations == 1
    assert len(calls) == 1


def test_pruning_keeps_the_retention_threshold_active():
    config = SwarmConfig(particles=4, retention_threshold=3, prune_scale=0.01)
    best = np.array([0.0, 0.005, 0.01])
    particles = [
        Particle(position=best + offset, velocity=np.zeros(3), best_position=best + offset, index=index)
        for index, offset in enumerate([0.0, 0.01, 0.02, 0.03])
    ]
    result = prune_and_replenish(
        particles, best, config, np.random.default_rng(1), (0.0, 0.04), 0.005, _quadratic
    )
    active = [particle for particle in result if particle.active]
    assert len(active) == config.retention_threshold
    assert all(math.isfinite(particle.best_fitness) for particle in active if particle.index >= 4)
    assert all(np.all((particle.position >= 0.0) & (particle.position <= 0.04)) for particle in result)


def test_swarm_improves_monotonically_and_returns_a_feasible_layout():
    config = SwarmConfig(particles=6, iterations=15, retention_threshold=4, seed=3)
    result = run_rpdpso(LAYOUT, config, _quadratic)
    assert all(later <= earlier for earlier, later in zip(result.fitness_trace, result.fitness_trace[1:]))
    assert len(result.fitness_trace) == config.iterations + 1
    assert np.all(np.diff(result.position) >= 0)
    assert spacing_violations(result.position, LAYOUT.min_spacing) == 0
    assert result.position[0] >= LAYOUT.tx_bounds[0] and result.position[-1] <= LAYOUT.tx_bounds[1]
    assert result.fitness <= _quadratic(LAYOUT.tx_positions)[0]
    assert result.evaluations > 0


def test_swarm_is_deterministic_for_a_seed():
    config = SwarmConfig(particles=5, iterations=8, retention_threshold=3, seed=11)
    first = run_rpdpso(LAYOUT, config, _quadratic)
    second = run_rpdpso(LAYOUT, config, _quadratic)
    np.testing.assert_array_equal(first.position, second.position)
    assert first.fitness_trace == second.fitness_trace


def test_warm_start_joins_the_initial_swarm():
    config = SwarmConfig(particles=3, iterations=0, retention_threshold=2, warm_start=True)
    result = run_rpdpso(LAYOUT, config, _quadratic, warm_start=TARGET)
    np.testing.assert_allclose(result.position, TARGET)
    assert result.fitness == pytest.approx(0.0, abs=1e-12)


def test_swarm_without_any_feasible_particle_is_infeasible():
    config = SwarmConfig(particles=2, iterations=2, retention_threshold=1)
    with pytest.raises(InfeasibleProblemError):
        run_rpdpso(LAYOUT, config, lambda position: (math.inf, 0.0, None))

import math

import numpy as np
import pytest

from app.core.errors import InfeasibleProblemError
from app.schemas.core import ArrayLayout
from app.schemas.optimization import AlephPolicy, QosThresholds, SolverSettings
from app.services import channel_model
from app.services.beamforming_service import (
    gaussian_randomize,
    randomize_beams,
    rank_gap,
    relax_quadratic,
    sca_solve_qos,
    sca_solve_weighted,
)
from app.services.objective import aleph_factors, bound_ratios, information_matrices, weighted_objective

SETTINGS = SolverSettings(max_sca_iterations=3, randomization_samples=10)


def test_rank_gap_vanishes_for_unit_modulus_outer_products():
    beams = np.exp(1j * np.array([[0.1, 0.7, -1.2], [2.0, 0.3, 0.0]]))
    covariances = np.einsum("ni,nj->nij", beams, beams.conj())
    assert rank_gap(covariances, 0.1) == pytest.approx(0.0, abs=1e-12)
    assert rank_gap(np.stack([np.eye(3)] * 2), 0.1) < 0


def test_randomisation_keeps_the_incumbent_on_ties():
    covariances = np.stack([np.eye(2, dtype=complex)] * 3)
    incumbent = np.ones((3, 2), dtype=complex)
    beams, value, index = randomize_beams(covariances, lambda _: 1.0, 5, 0, incumbent=incumbent)
    assert index == 0
    np.testing.assert_array_equal(beams, incumbent)
    assert value == 1.0


def test_randomisation_is_reproducible():
    rng = np.random.default_rng(0)
    factor = rng.standard_normal((2, 3, 3)) + 1j * rng.standard_normal((2, 3, 3))
    covariances = np.einsum("nij,nkj->nik", factor, factor.conj())

    def score(beams):
        return float(np.real(np.einsum("ni,nij,nj->", beams.conj(), covariances, beams)))

    first = randomize_beams(covariances, score, 20, 9)
    second = randomize_beams(covariances, score, 20, 9)
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_allclose(np.abs(first[0]), 1.0)


def test_single_entry_recovery_is_trivial():
    np.testing.assert_array_equal(gaussian_randomize(np.ones((1, 1)), 10, 0), np.ones(1))


def test_relaxation_recovers_a_rank_one_maximiser():
    target = np.exp(1j * np.array([0.0, 0.9, -2.1, 1.4]))
    vector = relax_quadratic(np.outer(target, target.conj()), SETTINGS)
    np.testing.assert_allclose(np.abs(vector), 1.0)
    assert abs(target.conj() @ vector) ** 2 == pytest.approx(16.0, rel=1e-4)


def test_weighted_beams_never_lower_the_objective(system, layout, vehicles, beams):
    aleph = aleph_factors(AlephPolicy.UNIT, information_matrices(system, layout, beams, vehicles))
    before = weighted_objective(system, layout, beams, vehicles, 0.5, aleph)
    solution = sca_solve_weighted(system, layout, beams.powers, vehicles, 0.5, aleph, beams, settings=SETTINGS)
    after = weighted_objective(system, layout, beams.with_beams(solution.beams), vehicles, 0.5, aleph)
    assert after >= before - 1e-9 * abs(before)
    assert solution.objective == pytest.approx(after, rel=1e-9)
    np.testing.assert_allclose(np.abs(solution.beams), 1.0)
    assert 1 <= solution.iterations <= SETTINGS.max_sca_iterations


def test_qos_beams_respect_loose_thresholds(system, layout, vehicles, beams):
    thresholds = QosThresholds(1e-2, 10.0, 100.0)
    priors = np.tile(np.diag([1e6, 4.0, 4.0]), (2, 1, 1))
    solution = sca_solve_qos(
        system, layout, beams.powers, vehicles, thresholds, beams, priors=priors, settings=SETTINGS
    )
    chosen = beams.with_beams(solution.beams)
    ratios = bound_ratios(information_matrices(system, layout, chosen, vehicles, priors), thresholds)
    assert np.all(ratios <= 1 + SETTINGS.qos_slack)
    assert math.isfinite(solution.objective)


def test_inactive_thresholds_reduce_to_rate_maximisation(system, layout, vehicles, beams):
    inactive = QosThresholds(math.inf, math.inf, math.inf)
    qos = sca_solve_qos(system, layout, beams.powers, vehicles, inactive, beams, settings=SETTINGS)
    rate = sca_solve_weighted(system, layout, beams.powers, vehicles, 1.0, np.zeros(3), beams, settings=SETTINGS)
    np.testing.assert_allclose(qos.beams, rate.beams)


def test_single_antenna_that_misses_thresholds_is_infeasible(system, vehicles):
    layout = ArrayLayout.half_wavelength(system.wavelength, 1, 3, 3 * system.wavelength)
    beams = channel_model.matched_beams(system, layout, vehicles, np.array([0, 0, 1, 1]))
    with pytest.raises(InfeasibleProblemError) as error:
        sca_solve_qos(
            system, layout, beams.powers, vehicles, QosThresholds(1e-30, math.inf, math.inf), beams, settings=SETTINGS
        )
    assert error.value.constraint.startswith("theta")

import math

import cvxpy as cp
import numpy as np
import pytest
from scipy.optimize import brentq

from app.core.errors import InfeasibleProblemError
from app.schemas.optimization import AlephPolicy, PowerProblem, QosThresholds
from app.services.objective import (
    aleph_factors,
    bound_ratios,
    information_matrices,
    sensing_terms,
    sensing_value,
    tightest_constraint,
)
from app.services.power_service import (
    power_problem,
    psi_matrices,
    sensing_coefficients,
    solve_power_qos,
    solve_power_weighted,
    waterfill,
)

GAINS = np.array([1.0, 2.0, 5.0, 0.1])


def _reference_rate(gains, budget):
    powers = cp.Variable(gains.size, nonneg=True)
    problem = cp.Problem(cp.Maximize(cp.sum(cp.log(1 + cp.multiply(gains, powers))) / math.log(2)), [cp.sum(powers) <= budget])
    problem.solve(solver="CLARABEL")
    return problem.value


def _diagonal_problem(thresholds=None):
    coefficients = np.zeros((1, 2, 3, 3))
    coefficients[0, 0] = np.eye(3)
    coefficients[0, 1] = 0.1 * np.eye(3)
    return PowerProblem(
        gains=np.array([1.0, 2.0]), coefficients=coefficients, priors=None, budget=1.0, thresholds=thresholds
    )


def _random_problem(seed=4, vehicles=2, carriers=3):
    rng = np.random.default_rng(seed)
    factors = rng.standard_normal((vehicles, carriers, 3, 3))
    coefficients = np.einsum("knij,knlj->knil", factors, factors)
    return PowerProblem(
        gains=rng.uniform(0.5, 3.0, carriers), coefficients=coefficients, priors=np.tile(np.eye(3), (vehicles, 1, 1)),
        budget=1.0,
    )


def test_waterfill_meets_budget_and_matches_convex_solver():
    solution = waterfill(GAINS, 1.0)
    assert solution.powers.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(solution.powers >= 0)
    assert solution.kkt_residual < 1e-9
    assert solution.objective == pytest.approx(_reference_rate(GAINS, 1.0), rel=1e-5)


@pytest.mark.parametrize("budget", [0.05, 1.0, 20.0])
def test_sorted_water_level_is_the_multiplier_root(budget):
    def excess(multiplier):
        return np.maximum(1.0 / (multiplier * math.log(2)) - 1.0 / GAINS, 0.0).sum() - budget

    low = 1.0 / ((budget + (1.0 / GAINS).max()) * math.log(2))
    high = GAINS.max() / math.log(2)
    root = brentq(excess, low, high, xtol=1e-15, rtol=1e-14)
    solution = waterfill(GAINS, budget)
    assert solution.multiplier == pytest.approx(root, rel=1e-10)
    np.testing.assert_allclose(
        solution.powers, np.maximum(1.0 / (root * math.log(2)) - 1.0 / GAINS, 0.0), atol=1e-10 * budget
    )


def test_waterfill_leaves_weak_subcarrier_dry():
    solution = waterfill(np.array([100.0, 0.01]), 0.1)
    np.testing.assert_allclose(solution.powers, [0.1, 0.0], atol=1e-15)


def test_waterfill_without_any_gain_falls_back_to_uniform():
    solution = waterfill(np.zeros(4), 2.0)
    assert solution.status == "uniform_fallback"
    np.testing.assert_allclose(solution.powers, 0.5)


def test_rate_only_weighted_step_is_water_filling():
    problem = _random_problem()
    weighted = solve_power_weighted(problem, 1.0, np.zeros(3))
    np.testing.assert_allclose(weighted.powers, waterfill(problem.gains, problem.budget).powers, rtol=1e-12)


def test_weighted_step_respects_budget():
    problem = _random_problem()
    aleph = aleph_factors(AlephPolicy.UNIT, problem.information(np.full(3, 1 / 3)))
    for rho in (0.0, 0.3, 0.7):
        solution = solve_power_weighted(problem, rho, aleph)
        assert np.all(solution.powers >= 0)
        assert solution.powers.sum() <= problem.budget * (1 + 1e-12)


def test_sensing_coefficients_are_the_tangent_of_the_sensing_value():
    problem = _random_problem()
    aleph = np.array([0.3, 0.5, 0.2])
    reference = np.array([0.2, 0.5, 0.3])
    slopes = sensing_coefficients(problem, aleph, reference)
    step = 1e-6
    for n in range(problem.num_subcarriers):
        plus, minus = reference.copy(), reference.copy()
        plus[n] += step
        minus[n] -= step
        numeric = (
            sensing_value(problem.information(plus), aleph) - sensing_value(problem.information(minus), aleph)
        ) / (2 * step)
        assert numeric == pytest.approx(slopes[n], rel=1e-6, abs=1e-9)


def test_psi_is_psd_exactly_when_the_bound_meets_its_threshold():
    problem = _diagonal_problem()
    powers = np.array([1.0, 0.0])
    information = np.diag([1.0, 2.0, 3.0])
    problem.coefficients[0, 0] = information
    bound_d, bound_v = 0.5, 1 / 3
    loose = psi_matrices(problem, powers, QosThresholds(math.inf, bound_d * 1.01, bound_v * 1.01))
    tight = psi_matrices(problem, powers, QosThresholds(math.inf, bound_d * 0.99, bound_v * 0.99))
    assert np.all(loose.min_eigenvalues() >= 0)
    assert np.all(tight.min_eigenvalues() < 0)


def test_inactive_threshold_yields_identity_psi():
    problem = _diagonal_problem()
    psi = psi_matrices(problem, np.array([0.5, 0.5]), QosThresholds(1.0, math.inf, math.inf))
    np.testing.assert_array_equal(psi.distance, np.tile(np.eye(2), (1, 1, 1)))
    np.testing.assert_array_equal(psi.speed, np.tile(np.eye(2), (1, 1, 1)))


def test_qos_power_allocation_satisfies_thresholds():
    thresholds = QosThresholds(2.0, 2.0, math.inf)
    problem = _diagonal_problem(thresholds)
    solution = solve_power_qos(problem, backend="CLARABEL")
    assert solution.powers.sum() <= 1.0 + 1e-9
    assert np.all(bound_ratios(problem.information(solution.powers), thresholds) <= 1 + 1e-5)
    assert solution.powers[0] + 0.1 * solution.powers[1] >= 0.5 - 1e-6


def test_unreachable_thresholds_name_the_tightest_constraint():
    thresholds = QosThresholds(0.5, math.inf, math.inf)
    problem = _diagonal_problem(thresholds)
    with pytest.raises(InfeasibleProblemError) as error:
        solve_power_qos(problem, backend="CLARABEL")
    assert error.value.constraint == "theta[vehicle 0]"
    assert error.value.margin > 0


def test_power_problem_reproduces_observed_information(system, layout, vehicles, beams):
    problem = power_problem(system, layout, beams, vehicles)
    expected = information_matrices(system, layout, beams, vehicles)
    for actual, reference in zip(problem.information(beams.powers), expected):
        scale = np.sqrt(np.outer(np.diag(reference), np.diag(reference)))
        np.testing.assert_allclose(actual / scale, reference / scale, rtol=1e-9, atol=1e-12)


def test_unit_aleph_normalises_every_sensing_term(system, layout, vehicles, beams):
    matrices = information_matrices(system, layout, beams, vehicles)
    aleph = aleph_factors(AlephPolicy.UNIT, matrices)
    np.testing.assert_allclose(sensing_terms(matrices).sum(axis=0) * aleph, 1.0)
    assert sensing_value(matrices, aleph) == pytest.approx(3.0)


def test_tightest_constraint_reports_largest_ratio():
    name, margin = tightest_constraint(np.array([[0.5, 0.9, 0.1], [0.2, 1.4, 0.3]]))
    assert name == "distance[vehicle 1]"
    assert margin == pytest.approx(0.4)

"""Subcarrier power allocation: water-filling, the weighted power step and the QoS-constrained problem."""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import cvxpy as cp
import numpy as np

from app.core.errors import ConfigurationError, InfeasibleProblemError
from app.schemas.core import ArrayLayout, BeamformerSet, SystemConfig, VehicleState
from app.schemas.optimization import PowerProblem, PowerSolution, PsiMatrices, QosThresholds
from app.services import channel_model
from app.services.convex import INFEASIBLE, solve_problem
from app.services.fisher_service import quadratic_forms, zeta_basis
from app.services.objective import bound_ratios, sensing_gradient, sensing_value, tightest_constraint

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
BISECTION_STEPS = 200


def power_problem(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    priors: Optional[np.ndarray] = None,
    thresholds: Optional[QosThresholds] = None,
) -> PowerProblem:
    """Gains and per-watt information of every subcarrier for the current beams and layout."""
    coefficients = []
    for vehicle in vehicles:
        xi, xi1, xi2 = quadratic_forms(layout.tx_positions, beams.beams, vehicle.theta, system.wavelength)
        forms = np.stack([xi, xi1, xi2.real], axis=1)
        coefficients.append(np.einsum("nb,nbij->nij", forms, zeta_basis(system, layout, vehicle)))
    return PowerProblem(
        gains=channel_model.effective_gains(system, layout, beams, vehicles),
        coefficients=np.stack(coefficients),
        priors=priors,
        budget=system.total_power,
        thresholds=thresholds,
    )


def _rate(gains: np.ndarray, powers: np.ndarray) -> float:
    return float(np.sum(np.log2(1.0 + gains * powers)))


def _kkt_residual(gains: np.ndarray, powers: np.ndarray, linear: np.ndarray, multiplier: float) -> float:
    """Largest stationarity / complementary-slackness violation, relative to the multiplier."""
    marginal = gains / ((1.0 + gains * powers) * LN2) + linear
    active = powers > 0
    residual = np.zeros_like(powers)
    residual[active] = np.abs(marginal[active] - multiplier)
    residual[~active] = np.maximum(marginal[~active] - multiplier, 0.0)
    scale = max(abs(multiplier), 1e-300)
    return float(residual.max(initial=0.0) / scale)


# ----------------------------------------------------------------------
# Closed-form water-filling
def waterfill(gains: np.ndarray, budget: float, sensing_multiplier: float = 0.0) -> PowerSolution:
    """p_n = max(0, 1/((λ₁ − ȷ)ln2) − 1/ĝ_n) with Σ p_n = P_T.

    The water level 1/(λ₁ ln2) is read off the sorted inverse gains. Σ p_n is
    strictly decreasing in λ₁, so this is the root a bisection on λ₁ would
    converge to, found exactly in O(N log N). Zero-gain subcarriers receive no power.
    """
    gains = np.asarray(gains, dtype=float).reshape(-1)
    if np.any(gains < 0):
        raise ConfigurationError("Effective gains cannot be negative.")
    if not budget > 0:
        raise ConfigurationError("The power budget must be positive.", field="budget")
    count = gains.size
    if not np.any(gains > 0):
        logger.warning("All effective gains are zero; falling back to uniform power.")
        return PowerSolution(powers=np.full(count, budget / count), status="uniform_fallback")

    positive = np.flatnonzero(gains > 0)
    inverse = np.sort(1.0 / gains[positive])
    level = inverse[0] + budget
    for active in range(inverse.size, 0, -1):
        level = (budget + inverse[:active].sum()) / active
        if level > inverse[active - 1]:
            break
    powers = np.zeros(count)
    powers[positive] = np.maximum(level - 1.0 / gains[positive], 0.0)
    powers *= budget / powers.sum()
    multiplier = 1.0 / (level * LN2)
    return PowerSolution(
        powers=powers,
        status="optimal",
        multiplier=multiplier + sensing_multiplier,
        kkt_residual=_kkt_residual(gains, powers, np.zeros(count), multiplier),
        objective=_rate(gains, powers),
    )


# ----------------------------------------------------------------------
# Weighted power step
def sensing_coefficients(problem: PowerProblem, aleph: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """s_n: first-order change of the weighted sensing terms per watt on subcarrier n at `reference`."""
    information = problem.information(reference)
    gradients = np.stack([sensing_gradient(matrix, aleph) for matrix in information])
    return np.einsum("kij,knij->n", gradients, problem.coefficients)


def _generalized_powers(gains: np.ndarray, linear: np.ndarray, multiplier: float) -> np.ndarray:
    powers = np.zeros_like(gains)
    usable = (gains > 0) & (multiplier > linear)
    powers[usable] = np.maximum(
        1.0 / ((multiplier - linear[usable]) * LN2) - 1.0 / gains[usable], 0.0
    )
    return powers


def solve_power_weighted(
    problem: PowerProblem,
    rho: float,
    aleph: np.ndarray,
    reference: Optional[np.ndarray] = None,
) -> PowerSolution:
    """Maximise ρ·Σlog2(1 + ĝp) + (1 − ρ)·Σ s_n p_n over Σp ≤ P_T, p ≥ 0.

    The sensing terms enter through their tangent s at `reference` (uniform
    power by default). The optimum is a water-fill with per-subcarrier
    offsets ȷ_n = (1 − ρ)s_n/ρ, whose level is found by bisection.
    """
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}.", field="rho")
    aleph = np.asarray(aleph, dtype=float).reshape(3)
    gains, budget, count = problem.gains, problem.budget, problem.num_subcarriers
    if reference is None:
        reference = np.full(count, budget / count)
    slopes = sensing_coefficients(problem, aleph, reference) if rho < 1.0 else np.zeros(count)

    def finish(powers: np.ndarray, status: str, multiplier: float, residual: float) -> PowerSolution:
        value = rho * _rate(gains, powers)
        if rho < 1.0:
            value += (1.0 - rho) * sensing_value(problem.information(powers), aleph)
        return PowerSolution(powers=powers, status=status, multiplier=multiplier, kkt_residual=residual, objective=value)

    if rho == 0.0:
        powers = np.zeros(count)
        best = int(np.argmax(slopes))
        if slopes[best] > 0:
            powers[best] = budget
        return finish(powers, "optimal", float(max(slopes[best], 0.0)), 0.0)

    linear = (1.0 - rho) * slopes / rho
    highest = float(linear.max())
    if np.ptp(linear) <= 1e-15 * max(1.0, abs(highest)) and highest >= 0:
        filled = waterfill(gains, budget, highest)
        return finish(filled.powers, filled.status, rho * filled.multiplier, filled.kkt_residual)

    if highest < 0 and _generalized_powers(gains, linear, 0.0).sum() <= budget:
        powers = _generalized_powers(gains, linear, 0.0)
        return finish(powers, "optimal", 0.0, _kkt_residual(gains, powers, linear, 0.0))

    low, high = highest, float(np.max(linear + gains / LN2))
    for _ in range(BISECTION_STEPS):
        middle = 0.5 * (low + high)
        if middle <= low or middle >= high:
            break
        if _generalized_powers(gains, linear, middle).sum() > budget:
            low = middle
        else:
            high = middle
    powers = _generalized_powers(gains, linear, high)
    remainder = budget - powers.sum()
    if remainder > 0:
        powers[int(np.argmax(linear))] += remainder
    powers *= min(1.0, budget / powers.sum())
    logger.debug("Weighted power step: level %.6g, %d active subcarriers", high, int(np.count_nonzero(powers)))
    return finish(powers, "optimal", rho * high, _kkt_residual(gains, powers, linear, high))


# ----------------------------------------------------------------------
# QoS power problem
def psi_matrices(problem: PowerProblem, powers: np.ndarray, thresholds: QosThresholds) -> PsiMatrices:
    """Ψ^d = [[I_νν, √ς_d I_dν], [·, ς_d I_dd − 1]] and Ψ^ν likewise, per vehicle.

    I includes the prior. An infinite threshold yields the identity, its
    constraint being inactive.
    """
    information = problem.information(powers)
    _, limit_d, limit_v = thresholds.as_array()

    def build(limit: float, main: int, other: int) -> np.ndarray:
        if math.isinf(limit):
            return np.tile(np.eye(2), (information.shape[0], 1, 1))
        matrices = np.empty((information.shape[0], 2, 2))
        matrices[:, 0, 0] = information[:, other, other]
        matrices[:, 0, 1] = matrices[:, 1, 0] = math.sqrt(limit) * information[:, 1, 2]
        matrices[:, 1, 1] = limit * information[:, main, main] - 1.0
        return matrices

    return PsiMatrices(distance=build(limit_d, 1, 2), speed=build(limit_v, 2, 1))


def _balance(first: float, second: float) -> float:
    if first > 0 and second > 0:
        return math.sqrt(first / second)
    return 1.0


def solve_power_qos(problem: PowerProblem, *, backend: Optional[str] = None) -> PowerSolution:
    """Sum-rate-maximising powers subject to the θ, Ψ^d and Ψ^ν constraints of every vehicle."""
    count = problem.num_subcarriers
    powers = cp.Variable(count, nonneg=True)
    budget = cp.sum(powers) <= problem.budget
    constraints = [budget]
    thresholds = problem.thresholds
    if thresholds is not None:
        limit_theta, limit_d, limit_v = thresholds.as_array()
        reference = problem.information(np.full(count, problem.budget / count))

        def entry(k: int, i: int, j: int, scale: float) -> cp.Expression:
            return scale * (problem.coefficients[k, :, i, j] @ powers + problem.priors[k, i, j])

        for k in range(problem.num_vehicles):
            if math.isfinite(limit_theta):
                constraints.append(entry(k, 0, 0, limit_theta) >= 1)
            for limit, main, other in ((limit_d, 1, 2), (limit_v, 2, 1)):
                if math.isinf(limit):
                    continue
                ratio = _balance(limit * reference[k, main, main], reference[k, other, other])
                block = cp.Variable((2, 2), symmetric=True)
                constraints += [
                    block >> 0,
                    block[0, 0] == entry(k, other, other, ratio ** 2),
                    block[0, 1] == entry(k, 1, 2, ratio * math.sqrt(limit)),
                    block[1, 1] == entry(k, main, main, limit) - 1,
                ]

    objective = cp.Maximize(cp.sum(cp.log(1 + cp.multiply(problem.gains, powers))) / LN2)
    status = solve_problem(cp.Problem(objective, constraints), stage="power-qos", backend=backend)
    if status in INFEASIBLE:
        uniform = np.full(count, problem.budget / count)
        name, margin = tightest_constraint(bound_ratios(problem.information(uniform), thresholds))
        raise InfeasibleProblemError(
            f"QoS power allocation is infeasible; most violated constraint {name} "
            f"at {margin + 1:.3g}x its threshold under uniform power.",
            constraint=name,
            margin=margin,
        )

    values = np.clip(np.asarray(powers.value, dtype=float), 0.0, None)
    if values.sum() > problem.budget:
        values *= problem.budget / values.sum()
    multiplier = float(budget.dual_value) if budget.dual_value is not None else 0.0
    slackness = abs(multiplier * (problem.budget - values.sum()))
    return PowerSolution(
        powers=values,
        status=str(status),
        multiplier=multiplier,
        kkt_residual=slackness,
        objective=_rate(problem.gains, values),
    )

"""Unit-modulus beamforming by semidefinite relaxation.

Each subcarrier's beam w_n is lifted to W_n = w_n w_n^H with unit diagonal.
The rank-one requirement is promoted by a penalty μ·Σ_n(λ_max(W_n) − M_tx),
whose convex λ_max is linearised at the incumbent principal eigenvector;
the resulting surrogate lower-bounds the relaxed objective, so successive
solves never decrease it. Beams are recovered by Gaussian randomisation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import cvxpy as cp
import numpy as np

from app.core.errors import ConfigurationError, InfeasibleProblemError
from app.schemas.core import ArrayLayout, BeamformerSet, SystemConfig, VehicleState
from app.schemas.optimization import QosThresholds, SdpSolution, SolverSettings
from app.services import channel_model
from app.services.convex import INFEASIBLE, solve_problem
from app.services.fisher_service import XI, form_matrices, quadratic_forms, zeta_basis
from app.services.linalg import symmetrize
from app.services.objective import bound_ratios, sensing_value, tightest_constraint

logger = logging.getLogger(__name__)

BeamScore = Callable[[np.ndarray], float]


@dataclass(eq=False)
class SlotModel:
    """Everything the beam subproblem needs once geometry and powers are fixed."""

    system: SystemConfig
    layout: ArrayLayout
    vehicles: List[VehicleState]
    powers: np.ndarray
    assignment: np.ndarray
    priors: np.ndarray
    rate_coefficients: np.ndarray
    form_mats: np.ndarray
    bases: np.ndarray

    @classmethod
    def build(
        cls,
        system: SystemConfig,
        layout: ArrayLayout,
        vehicles: Sequence[VehicleState],
        powers: np.ndarray,
        assignment: np.ndarray,
        priors: Optional[np.ndarray] = None,
    ) -> "SlotModel":
        vehicles = list(vehicles)
        powers = np.asarray(powers, dtype=float).reshape(-1)
        if powers.size != system.num_subcarriers:
            raise ConfigurationError("One power per subcarrier is required.")
        if priors is None:
            priors = np.zeros((len(vehicles), 3, 3))
        form_mats = np.stack([
            np.stack(form_matrices(layout.tx_positions, vehicle.theta, system.wavelength)) for vehicle in vehicles
        ])
        return cls(
            system=system,
            layout=layout,
            vehicles=vehicles,
            powers=powers,
            assignment=np.asarray(assignment, dtype=int),
            priors=np.asarray(priors, dtype=float).reshape(len(vehicles), 3, 3),
            rate_coefficients=channel_model.rate_coefficients(system, vehicles, assignment),
            form_mats=form_mats,
            bases=np.stack([zeta_basis(system, layout, vehicle) for vehicle in vehicles]),
        )

    @property
    def num_vehicles(self) -> int:
        return len(self.vehicles)

    @property
    def num_subcarriers(self) -> int:
        return int(self.powers.size)

    @property
    def num_tx(self) -> int:
        return self.layout.num_tx

    # ------------------------------------------------------------------
    # Numeric evaluation
    def forms_from_beams(self, beams: np.ndarray) -> np.ndarray:
        """(K, N, 3) values of (Ξ, Ξ1, Re Ξ2)."""
        rows = []
        for vehicle in self.vehicles:
            xi, xi1, xi2 = quadratic_forms(self.layout.tx_positions, beams, vehicle.theta, self.system.wavelength)
            rows.append(np.stack([xi, xi1, xi2.real], axis=1))
        return np.stack(rows)

    def forms_from_covariances(self, covariances: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("kbij,nji->knb", self.form_mats, covariances))

    def information(self, forms: np.ndarray) -> np.ndarray:
        return np.einsum("n,knb,knbij->kij", self.powers, forms, self.bases) + self.priors

    def rates(self, forms: np.ndarray) -> np.ndarray:
        xi = forms[self.assignment, np.arange(self.num_subcarriers), XI]
        return np.log2(1.0 + self.rate_coefficients * self.powers * np.maximum(xi, 0.0))

    def weighted_value(self, forms: np.ndarray, rho: float, aleph: np.ndarray) -> float:
        rate = float(np.sum(self.rates(forms)))
        if rho >= 1.0:
            return rate
        return rho * rate + (1.0 - rho) * sensing_value(self.information(forms), aleph)

    def qos_value(self, forms: np.ndarray, thresholds: QosThresholds, slack: float) -> float:
        ratios = bound_ratios(self.information(forms), thresholds)
        if np.any(ratios > 1.0 + slack):
            return -math.inf
        return float(np.sum(self.rates(forms)))


@dataclass(eq=False)
class _Relaxation:
    problem: cp.Problem
    covariances: List[cp.Variable]
    kappa: Optional[cp.Variable] = None
    epsilon_distance: Optional[cp.Variable] = None
    epsilon_speed: Optional[cp.Variable] = None


class _InfeasibleRelaxation(Exception):
    pass


# ----------------------------------------------------------------------
# Relaxation building blocks
def _rank_one(beams: np.ndarray) -> np.ndarray:
    beams = np.asarray(beams, dtype=complex)
    return np.einsum("ni,nj->nij", beams, beams.conj())


def principal_vectors(covariances: np.ndarray) -> np.ndarray:
    _, vectors = np.linalg.eigh(covariances)
    return vectors[..., -1]


def rank_gap(covariances: np.ndarray, weight: float) -> float:
    """μ·Σ_n(λ_max(W_n) − M); zero exactly when every W_n is rank one."""
    if weight == 0:
        return 0.0
    eigenvalues = np.linalg.eigvalsh(covariances)
    return float(weight * np.sum(eigenvalues[:, -1] - covariances.shape[-1]))


def _balance(first: float, second: float) -> float:
    """Congruence factor that equalises the diagonal of a 2×2 LMI."""
    if first > 0 and second > 0:
        return math.sqrt(first / second)
    return 1.0


def _covariance_block(num_tx: int, num_subcarriers: int) -> Tuple[List[cp.Variable], List[cp.Constraint]]:
    covariances = [cp.Variable((num_tx, num_tx), hermitian=True) for _ in range(num_subcarriers)]
    constraints: List[cp.Constraint] = []
    for covariance in covariances:
        constraints += [covariance >> 0, cp.real(cp.diag(covariance)) == 1]
    return covariances, constraints


def _form_expressions(model: SlotModel, covariances: List[cp.Variable]) -> cp.Expression:
    """(N, 3K) affine expressions Tr(𝒳_{k,b} W_n), column 3k + b."""
    size = model.num_tx ** 2
    rows = model.form_mats.reshape(-1, size)
    return cp.vstack([
        cp.real(rows @ cp.reshape(covariance, (size,), order="F")) for covariance in covariances
    ])


def _information_entry(model: SlotModel, forms: cp.Expression, vehicle: int, i: int, j: int, scale: float) -> cp.Expression:
    weights = scale * model.powers[:, None] * model.bases[vehicle, :, :, i, j]
    return cp.sum(cp.multiply(weights, forms[:, 3 * vehicle:3 * vehicle + 3])) + scale * model.priors[vehicle, i, j]


def _rate_expression(model: SlotModel, forms: cp.Expression) -> cp.Expression:
    terms = []
    for carrier in range(model.num_subcarriers):
        weight = model.rate_coefficients[carrier] * model.powers[carrier]
        if weight <= 0:
            continue
        column = 3 * int(model.assignment[carrier]) + XI
        terms.append(cp.log(1 + weight * forms[carrier, column]) / math.log(2))
    return cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)


def _rank_surrogate(covariances: List[cp.Variable], incumbent: np.ndarray, weight: float) -> cp.Expression:
    if weight == 0:
        return cp.Constant(0.0)
    vectors = principal_vectors(incumbent)
    terms = [
        cp.real(cp.trace(np.outer(vector, vector.conj()) @ covariance))
        for vector, covariance in zip(vectors, covariances)
    ]
    return weight * (cp.sum(cp.hstack(terms)) - len(covariances) * incumbent.shape[-1])


def _lmi(top_left: cp.Expression, off: cp.Expression, bottom_right: cp.Expression) -> List[cp.Constraint]:
    block = cp.Variable((2, 2), symmetric=True)
    return [block >> 0, block[0, 0] == top_left, block[0, 1] == off, block[1, 1] == bottom_right]


def _weighted_relaxation(
    model: SlotModel, rho: float, aleph: np.ndarray, incumbent: np.ndarray, rank_penalty: float
) -> _Relaxation:
    covariances, constraints = _covariance_block(model.num_tx, model.num_subcarriers)
    forms = _form_expressions(model, covariances)
    objective = rho * _rate_expression(model, forms) if rho > 0 else cp.Constant(0.0)
    relaxation = _Relaxation(problem=None, covariances=covariances)
    if rho < 1.0:
        count = model.num_vehicles
        kappa, eps_d, eps_v = cp.Variable(count), cp.Variable(count), cp.Variable(count)
        reference = model.information(model.forms_from_covariances(incumbent))
        for k in range(count):
            constraints.append(kappa[k] <= _information_entry(model, forms, k, 0, 0, aleph[0]))
            ratio = _balance(reference[k, 1, 1], reference[k, 2, 2])
            if aleph[1] > 0:
                constraints += _lmi(
                    _information_entry(model, forms, k, 1, 1, aleph[1]) - eps_d[k],
                    _information_entry(model, forms, k, 1, 2, ratio * aleph[1]),
                    _information_entry(model, forms, k, 2, 2, ratio ** 2 * aleph[1]),
                )
            else:
                constraints.append(eps_d[k] == 0)
            if aleph[2] > 0:
                constraints += _lmi(
                    _information_entry(model, forms, k, 2, 2, aleph[2]) - eps_v[k],
                    _information_entry(model, forms, k, 1, 2, aleph[2] / ratio),
                    _information_entry(model, forms, k, 1, 1, aleph[2] / ratio ** 2),
                )
            else:
                constraints.append(eps_v[k] == 0)
        objective = objective + (1.0 - rho) * (cp.sum(kappa) + cp.sum(eps_d) + cp.sum(eps_v))
        relaxation.kappa, relaxation.epsilon_distance, relaxation.epsilon_speed = kappa, eps_d, eps_v
    objective = objective + _rank_surrogate(covariances, incumbent, rank_penalty)
    relaxation.problem = cp.Problem(cp.Maximize(objective), constraints)
    return relaxation


def _qos_relaxation(
    model: SlotModel, thresholds: QosThresholds, incumbent: np.ndarray, rank_penalty: float
) -> _Relaxation:
    covariances, constraints = _covariance_block(model.num_tx, model.num_subcarriers)
    forms = _form_expressions(model, covariances)
    reference = model.information(model.forms_from_covariances(incumbent))
    limit_theta, limit_d, limit_v = thresholds.as_array()
    for k in range(model.num_vehicles):
        if math.isfinite(limit_theta):
            constraints.append(_information_entry(model, forms, k, 0, 0, limit_theta) >= 1)
        ratio = _balance(reference[k, 1, 1], reference[k, 2, 2])
        if math.isfinite(limit_d):
            constraints += _lmi(
                _information_entry(model, forms, k, 1, 1, limit_d) - 1,
                _information_entry(model, forms, k, 1, 2, ratio * limit_d),
                _information_entry(model, forms, k, 2, 2, ratio ** 2 * limit_d),
            )
        if math.isfinite(limit_v):
            constraints += _lmi(
                _information_entry(model, forms, k, 2, 2, limit_v) - 1,
                _information_entry(model, forms, k, 1, 2, limit_v / ratio),
                _information_entry(model, forms, k, 1, 1, limit_v / ratio ** 2),
            )
    objective = _rate_expression(model, forms) + _rank_surrogate(covariances, incumbent, rank_penalty)
    return _Relaxation(problem=cp.Problem(cp.Maximize(objective), constraints), covariances=covariances)


# ----------------------------------------------------------------------
# Successive convex approximation
@dataclass(eq=False)
class _ScaOutcome:
    covariances: np.ndarray
    relaxation: _Relaxation
    surrogate_trace: List[float]
    true_trace: List[float]
    iterations: int
    status: str


def _run_sca(
    build: Callable[[np.ndarray], _Relaxation],
    true_value: Callable[[np.ndarray], float],
    initial: np.ndarray,
    settings: SolverSettings,
    stage: str,
) -> _ScaOutcome:
    covariances = initial
    current = true_value(covariances)
    surrogate_trace: List[float] = []
    true_trace = [current]
    relaxation, status = None, "not_run"
    for iteration in range(settings.max_sca_iterations):
        relaxation = build(covariances)
        status = solve_problem(relaxation.problem, stage=stage, backend=settings.backend)
        if status in INFEASIBLE:
            raise _InfeasibleRelaxation(status)
        candidate = np.stack([symmetrize(variable.value) for variable in relaxation.covariances])
        surrogate = float(relaxation.problem.value)
        value = true_value(candidate)
        improvement = surrogate - current
        surrogate_trace.append(surrogate)
        true_trace.append(value)
        covariances, current = candidate, value
        logger.debug("[%s] SCA iteration %d: surrogate %.6g, relaxed %.6g", stage, iteration + 1, surrogate, value)
        if settings.rank_penalty == 0 or abs(improvement) <= settings.sca_tolerance * max(1.0, abs(surrogate)):
            break
    return _ScaOutcome(covariances, relaxation, surrogate_trace, true_trace, len(surrogate_trace), status)


# ----------------------------------------------------------------------
# Gaussian randomisation
def randomize_beams(
    covariances: np.ndarray,
    score: BeamScore,
    samples: int,
    seed: Optional[int],
    *,
    incumbent: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, float, int]:
    """Best unit-modulus beam set among the incumbent, the principal phases and `samples` draws.

    Candidates are scored in order; a later one must be strictly better, so
    ties go to the lowest index.
    """
    covariances = np.asarray(covariances, dtype=complex)
    count, size = covariances.shape[0], covariances.shape[-1]
    rng = np.random.default_rng(seed)
    eigenvalues, vectors = np.linalg.eigh(covariances)
    factors = vectors * np.sqrt(np.clip(eigenvalues, 0.0, None))[:, None, :]

    candidates = [] if incumbent is None else [np.asarray(incumbent, dtype=complex)]
    candidates.append(np.exp(1j * np.angle(vectors[..., -1])))
    best_beams, best_score, best_index = None, -math.inf, -1
    for index in range(len(candidates) + samples):
        if index < len(candidates):
            beams = candidates[index]
        else:
            draw = (rng.standard_normal((count, size)) + 1j * rng.standard_normal((count, size))) / math.sqrt(2)
            beams = np.exp(1j * np.angle(np.einsum("nij,nj->ni", factors, draw)))
        value = score(beams)
        if best_beams is None or value > best_score:
            best_beams, best_score, best_index = beams, value, index
    return best_beams, best_score, best_index


def gaussian_randomize(
    covariance: np.ndarray,
    samples: int,
    rng_seed: Optional[int],
    score: Optional[Callable[[np.ndarray], float]] = None,
) -> np.ndarray:
    """Unit-modulus vector recovered from one PSD matrix; defaults to maximising w^H W w."""
    covariance = np.asarray(covariance, dtype=complex)
    if covariance.shape[0] == 1:
        return np.ones(1, dtype=complex)
    if score is None:
        def score(vector: np.ndarray) -> float:
            return float(np.real(vector.conj() @ covariance @ vector))
    beams, _, _ = randomize_beams(covariance[None], lambda beams: score(beams[0]), samples, rng_seed)
    return beams[0]


def relax_quadratic(matrix: np.ndarray, settings: Optional[SolverSettings] = None) -> np.ndarray:
    """Unit-modulus maximiser of w^H R w through one relaxation and randomisation."""
    settings = settings or SolverSettings()
    matrix = symmetrize(np.asarray(matrix, dtype=complex))
    size = matrix.shape[0]
    if size == 1:
        return np.ones(1, dtype=complex)
    covariance = cp.Variable((size, size), hermitian=True)
    problem = cp.Problem(
        cp.Maximize(cp.real(cp.trace(matrix @ covariance))),
        [covariance >> 0, cp.real(cp.diag(covariance)) == 1],
    )
    solve_problem(problem, stage="relax_quadratic", backend=settings.backend)
    return gaussian_randomize(
        symmetrize(covariance.value), settings.randomization_samples, settings.seed,
        lambda vector: float(np.real(vector.conj() @ matrix @ vector)),
    )


# ----------------------------------------------------------------------
# Public solvers
def _values(variable: Optional[cp.Variable], count: int) -> np.ndarray:
    if variable is None or variable.value is None:
        return np.zeros(count)
    return np.asarray(variable.value, dtype=float).reshape(-1)


def _scalar_solution(model: SlotModel, score: BeamScore) -> SdpSolution:
    beams = np.ones((model.num_subcarriers, 1), dtype=complex)
    value = score(beams)
    zeros = np.zeros(model.num_vehicles)
    return SdpSolution(
        covariances=np.ones((model.num_subcarriers, 1, 1), dtype=complex),
        beams=beams,
        kappa=zeros,
        epsilon_distance=zeros,
        epsilon_speed=zeros,
        objective=value,
        surrogate_trace=[value],
        true_trace=[value],
    )


def _check_init(layout: ArrayLayout, init: BeamformerSet) -> None:
    if init.num_tx != layout.num_tx:
        raise ConfigurationError(f"Initial beams have {init.num_tx} entries for {layout.num_tx} transmit antennas.")


def sca_solve_weighted(
    system: SystemConfig,
    layout: ArrayLayout,
    powers: np.ndarray,
    vehicles: Sequence[VehicleState],
    rho: float,
    aleph: np.ndarray,
    init: BeamformerSet,
    *,
    priors: Optional[np.ndarray] = None,
    settings: Optional[SolverSettings] = None,
) -> SdpSolution:
    """Beams maximising ρ·sum-rate + (1 − ρ)·Σ_k ℵ·(sensing terms) at fixed powers and layout."""
    if not 0.0 <= rho <= 1.0:
        raise ConfigurationError(f"rho must lie in [0, 1], got {rho}.", field="rho")
    settings = settings or SolverSettings()
    _check_init(layout, init)
    aleph = np.asarray(aleph, dtype=float).reshape(3)
    model = SlotModel.build(system, layout, vehicles, powers, init.assignment, priors)

    def score(beams: np.ndarray) -> float:
        return model.weighted_value(model.forms_from_beams(beams), rho, aleph)

    if model.num_tx == 1:
        return _scalar_solution(model, score)

    def relaxed(covariances: np.ndarray) -> float:
        forms = model.forms_from_covariances(covariances)
        return model.weighted_value(forms, rho, aleph) + rank_gap(covariances, settings.rank_penalty)

    try:
        outcome = _run_sca(
            lambda incumbent: _weighted_relaxation(model, rho, aleph, incumbent, settings.rank_penalty),
            relaxed,
            _rank_one(init.beams),
            settings,
            "beamforming",
        )
    except _InfeasibleRelaxation as exc:
        raise InfeasibleProblemError(f"Weighted beamforming relaxation reported {exc}.") from exc
    beams, value, index = randomize_beams(
        outcome.covariances, score, settings.randomization_samples, settings.seed, incumbent=init.beams
    )
    logger.debug("Weighted beams chosen from candidate %d (objective %.6g).", index, value)
    count = model.num_vehicles
    return SdpSolution(
        covariances=outcome.covariances,
        beams=beams,
        kappa=_values(outcome.relaxation.kappa, count),
        epsilon_distance=_values(outcome.relaxation.epsilon_distance, count),
        epsilon_speed=_values(outcome.relaxation.epsilon_speed, count),
        objective=value,
        surrogate_trace=outcome.surrogate_trace,
        true_trace=outcome.true_trace,
        iterations=outcome.iterations,
        status=outcome.status,
    )


def sca_solve_qos(
    system: SystemConfig,
    layout: ArrayLayout,
    powers: np.ndarray,
    vehicles: Sequence[VehicleState],
    thresholds: QosThresholds,
    init: BeamformerSet,
    *,
    priors: Optional[np.ndarray] = None,
    settings: Optional[SolverSettings] = None,
) -> SdpSolution:
    """Sum-rate-maximising beams whose LPCRLBs stay within `thresholds`.

    Recovered beams may exceed a threshold by `qos_slack`; when no candidate
    qualifies the relaxation is re-solved with thresholds scaled by
    `tightening_factor`, up to `tightening_rounds` times.
    """
    settings = settings or SolverSettings()
    if thresholds.is_inactive:
        return sca_solve_weighted(
            system, layout, powers, vehicles, 1.0, np.zeros(3), init, priors=priors, settings=settings
        )
    _check_init(layout, init)
    model = SlotModel.build(system, layout, vehicles, powers, init.assignment, priors)

    def score(beams: np.ndarray) -> float:
        return model.qos_value(model.forms_from_beams(beams), thresholds, settings.qos_slack)

    def report(prefix: str) -> InfeasibleProblemError:
        ratios = bound_ratios(model.information(model.forms_from_beams(init.beams)), thresholds)
        name, margin = tightest_constraint(ratios)
        return InfeasibleProblemError(
            f"{prefix}; tightest constraint {name} at {margin + 1:.3g}x its threshold.",
            constraint=name,
            margin=margin,
        )

    if model.num_tx == 1:
        solution = _scalar_solution(model, score)
        if not math.isfinite(solution.objective):
            raise report("QoS thresholds are not met by the single-antenna beam")
        return solution

    def relaxed(covariances: np.ndarray) -> float:
        forms = model.forms_from_covariances(covariances)
        return float(np.sum(model.rates(forms))) + rank_gap(covariances, settings.rank_penalty)

    working = thresholds
    for attempt in range(settings.tightening_rounds + 1):
        try:
            outcome = _run_sca(
                lambda incumbent: _qos_relaxation(model, working, incumbent, settings.rank_penalty),
                relaxed,
                _rank_one(init.beams),
                settings,
                "beamforming-qos",
            )
        except _InfeasibleRelaxation as exc:
            raise report(f"QoS beamforming relaxation is {exc}") from exc
        beams, value, index = randomize_beams(
            outcome.covariances, score, settings.randomization_samples, settings.seed, incumbent=init.beams
        )
        if math.isfinite(value):
            zeros = np.zeros(model.num_vehicles)
            return SdpSolution(
                covariances=outcome.covariances,
                beams=beams,
                kappa=zeros,
                epsilon_distance=zeros,
                epsilon_speed=zeros,
                objective=value,
                surrogate_trace=outcome.surrogate_trace,
                true_trace=outcome.true_trace,
                iterations=outcome.iterations,
                status=outcome.status,
            )
        working = working.scaled(settings.tightening_factor)
        logger.info("No randomised beam meets the thresholds (round %d); tightening to %s.", attempt + 1, working)
    raise report("No unit-modulus beam meets the QoS thresholds after tightening")

"""Movable-antenna position optimisation by projected gradient ascent."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import isotonic_regression

from app.core.errors import ConfigurationError
from app.schemas.core import POSITION_TOLERANCE, ArrayLayout, BeamformerSet, SystemConfig, VehicleState
from app.schemas.optimization import PgaConfig, PgaResult
from app.services import channel_model
from app.services.fisher_service import XI, FisherConstants, quadratic_forms, zeta_basis
from app.services.objective import sensing_gradient, weighted_objective

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrigForms:
    """cos/sin of the transmit phases 2πp·cosθ/λ and the real/imaginary parts of one beam."""

    f: np.ndarray
    s: np.ndarray
    hbar: np.ndarray
    eth: np.ndarray

    @classmethod
    def build(cls, positions: np.ndarray, theta: float, wavelength: float, beam: np.ndarray) -> "TrigForms":
        phase = 2 * np.pi * np.asarray(positions, dtype=float) * math.cos(theta) / wavelength
        beam = np.asarray(beam, dtype=complex)
        return cls(f=np.cos(phase), s=np.sin(phase), hbar=beam.real.copy(), eth=beam.imag.copy())

    @property
    def A(self) -> np.ndarray:
        return np.outer(self.f, self.f) + np.outer(self.s, self.s)

    @property
    def U(self) -> np.ndarray:
        return np.outer(self.f, self.s) - np.outer(self.s, self.f)

    @property
    def T(self) -> np.ndarray:
        return np.outer(self.hbar, self.hbar) + np.outer(self.eth, self.eth)

    @property
    def D(self) -> np.ndarray:
        return np.outer(self.hbar, self.eth) - np.outer(self.eth, self.hbar)


def xi_terms(trig: TrigForms, positions: np.ndarray) -> Tuple[float, float, complex, complex]:
    """(Ξ, Ξ1, Ξ2, Ξ3) in real arithmetic; Λ_tx = diag(positions)."""
    f, s, T, D = trig.f, trig.s, trig.T, trig.D
    scale = np.asarray(positions, dtype=float)
    lf, ls = scale * f, scale * s
    xi = f @ T @ f + s @ T @ s + 2 * f @ D @ s
    xi1 = lf @ T @ lf + ls @ T @ ls + 2 * lf @ D @ ls
    real = lf @ T @ f + ls @ T @ s + lf @ D @ s - ls @ D @ f
    imag = lf @ D @ f + ls @ D @ s - lf @ T @ s + ls @ T @ f
    xi2 = complex(real, imag)
    return float(xi), float(xi1), xi2, xi2.conjugate()


def form_gradients(trig: TrigForms, positions: np.ndarray, theta: float, wavelength: float) -> np.ndarray:
    """(3, M) gradients of (Ξ, Ξ1, Re Ξ2) with respect to the transmit positions."""
    p = np.asarray(positions, dtype=float)
    kappa = 2 * np.pi * math.cos(theta) / wavelength
    f, s, T, D = trig.f, trig.s, trig.T, trig.D
    omega1, omega2 = -kappa * s, kappa * f
    grad_xi = 2 * omega1 * (T @ f + D @ s) + 2 * omega2 * (T @ s - D @ f)
    lf, ls = p * f, p * s
    omega3, omega4 = f - kappa * p * s, s + kappa * p * f
    grad_xi1 = 2 * omega3 * (T @ lf + D @ ls) + 2 * omega4 * (T @ ls - D @ lf)

    # Ξ2 = conj(y)·x with x = a^H w and y = a^H Λ w.
    steering = f + 1j * s
    beam = trig.hbar + 1j * trig.eth
    terms = steering.conj() * beam
    x, y = terms.sum(), (p * terms).sum()
    dx = -1j * kappa * terms
    dy = terms * (1 - 1j * kappa * p)
    grad_xi2 = np.real(np.conj(dy) * x + np.conj(y) * dx)
    return np.stack([grad_xi, grad_xi1, grad_xi2])


# ----------------------------------------------------------------------
# Projections
def _check_region(low: float, high: float, count: int, spacing: float) -> None:
    if high - low < (count - 1) * spacing - POSITION_TOLERANCE:
        raise ConfigurationError(
            f"Region [{low:.6g}, {high:.6g}] m cannot host {count} antennas spaced by {spacing:.6g} m."
        )


def project_tx(
    candidate: Sequence[float],
    bounds: Tuple[float, float],
    spacing: float,
    *,
    literal_anchor: bool = False,
) -> np.ndarray:
    """Left-to-right clamp p_l = max(p_{l−1} + D_sp, min(c_l, D_max − (M − l)D_sp)).

    The anchor p_0 is D_min − D_sp; `literal_anchor` uses D_max − D_sp instead,
    which overshoots D_max, so its output goes through the default clamp and
    ends packed against D_max.
    """
    low, high = bounds
    values = np.asarray(candidate, dtype=float).reshape(-1)
    count = values.size
    _check_region(low, high, count, spacing)
    result = np.empty(count)
    previous = (high if literal_anchor else low) - spacing
    for index in range(count):
        upper = high - (count - 1 - index) * spacing
        result[index] = max(previous + spacing, min(values[index], upper))
        previous = result[index]
    if literal_anchor:
        return project_tx(result, bounds, spacing)
    return result


def project_rx(
    candidate: Sequence[float],
    bounds: Tuple[float, float],
    spacing: float,
    *,
    literal_anchor: bool = False,
) -> np.ndarray:
    """Right-to-left clamp anchored at p_{M+1} = D_max + D_sp.

    The lower envelope of element l is D_min + (l − 1)D_sp; `literal_anchor`
    uses the mirrored envelope D_min + (M − l)D_sp, which can break the
    ordering, so its output goes through the default clamp.
    """
    low, high = bounds
    values = np.asarray(candidate, dtype=float).reshape(-1)
    count = values.size
    _check_region(low, high, count, spacing)
    result = np.empty(count)
    following = high + spacing
    for index in range(count - 1, -1, -1):
        offset = count - 1 - index if literal_anchor else index
        result[index] = max(low + offset * spacing, min(values[index], following - spacing))
        following = result[index]
    if literal_anchor:
        return project_rx(result, bounds, spacing)
    return result


def project_ordered_exact(candidate: Sequence[float], bounds: Tuple[float, float], spacing: float) -> np.ndarray:
    """Euclidean projection onto {D_min ≤ p_1, p_{l+1} − p_l ≥ D_sp, p_M ≤ D_max}."""
    low, high = bounds
    values = np.asarray(candidate, dtype=float).reshape(-1)
    count = values.size
    _check_region(low, high, count, spacing)
    offsets = np.arange(count) * spacing
    shifted = isotonic_regression(values - offsets).x
    return np.clip(shifted, low, high - (count - 1) * spacing) + offsets


# ----------------------------------------------------------------------
# Transmit side
def tx_objective(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    rho: float,
    aleph: np.ndarray,
    priors: Optional[np.ndarray] = None,
) -> float:
    return weighted_objective(system, layout, beams, vehicles, rho, aleph, priors)


def grad_tx(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    rho: float,
    aleph: np.ndarray,
    priors: Optional[np.ndarray] = None,
) -> np.ndarray:
    """∂/∂p_tx of ρ·sum-rate + (1 − ρ)·Σ_k ℵ·(sensing terms)."""
    positions = layout.tx_positions
    wavelength = system.wavelength
    powers = beams.powers
    coefficients = channel_model.rate_coefficients(system, vehicles, beams.assignment)
    gradient = np.zeros(layout.num_tx)
    for k, vehicle in enumerate(vehicles):
        basis = zeta_basis(system, layout, vehicle)
        grads = []
        forms = []
        for beam in beams.beams:
            trig = TrigForms.build(positions, vehicle.theta, wavelength, beam)
            xi, xi1, xi2, _ = xi_terms(trig, positions)
            forms.append((xi, xi1, xi2.real))
            grads.append(form_gradients(trig, positions, vehicle.theta, wavelength))
        forms, grads = np.array(forms), np.array(grads)

        weights = np.zeros_like(forms)
        carriers = beams.subcarriers(k)
        if rho > 0 and carriers.size:
            snr = coefficients[carriers] * powers[carriers]
            weights[carriers, XI] += rho * snr / ((1.0 + snr * forms[carriers, XI]) * math.log(2))
        if rho < 1:
            information = np.einsum("n,nb,nbij->ij", powers, forms, basis)
            if priors is not None:
                information = information + np.asarray(priors, dtype=float)[k]
            outer = sensing_gradient(information, aleph)
            weights += (1.0 - rho) * powers[:, None] * np.einsum("ij,nbij->nb", outer, basis)
        gradient += np.einsum("nb,nbl->l", weights, grads)
    return gradient


# ----------------------------------------------------------------------
# Receive side
def rx_objective(system: SystemConfig, layout: ArrayLayout, beams: BeamformerSet, vehicles: Sequence[VehicleState]) -> float:
    """Σ_k I_θθ, the only part of the weighted objective that depends on p_rx."""
    total = 0.0
    for vehicle in vehicles:
        xi, xi1, xi2 = _forms(system, layout, beams, vehicle)
        forms = np.stack([xi, xi1, xi2], axis=1)
        total += float(np.einsum("n,nb,nb->", beams.powers, forms, zeta_basis(system, layout, vehicle)[:, :, 0, 0]))
    return total


def _forms(system: SystemConfig, layout: ArrayLayout, beams: BeamformerSet, vehicle: VehicleState):
    xi, xi1, xi2 = quadratic_forms(layout.tx_positions, beams.beams, vehicle.theta, system.wavelength)
    return xi, xi1, xi2.real


def grad_rx(system: SystemConfig, layout: ArrayLayout, beams: BeamformerSet, vehicles: Sequence[VehicleState]) -> np.ndarray:
    """∂(Σ_k I_θθ)/∂p_rx through the receive-position traces in the angle and angle–Doppler entries."""
    positions = layout.rx_positions
    gradient = np.zeros(layout.num_rx)
    for vehicle in vehicles:
        constants = FisherConstants.build(system, layout, vehicle)
        xi, _, xr = _forms(system, layout, beams, vehicle)
        scale = constants.num_blocks / constants.noise
        common = (2 * np.pi * constants.gamma) ** 2 * scale
        sine = math.sin(vehicle.theta)
        angle_weight = sine ** 2
        doppler_weight = 4 * vehicle.speed * sine ** 2 / system.wavelength
        angle = common / system.wavelength ** 2
        doppler = common * (constants.num_blocks - 1) * system.symbol_duration / (2 * system.wavelength)
        weighted_xi = float(beams.powers @ xi)
        weighted_xr = float(beams.powers @ xr)
        gradient += angle_weight * angle * (2 * positions * weighted_xi - 2 * weighted_xr)
        gradient += doppler_weight * doppler * weighted_xi
    return gradient


# ----------------------------------------------------------------------
# Backtracking ascent
def _ascend(
    start: np.ndarray,
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    initial_step: float,
    config: PgaConfig,
    label: str,
) -> PgaResult:
    position = np.asarray(start, dtype=float).copy()
    value = objective(position)
    trace = [value]
    accepted = 0
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        direction = gradient(position)
        norm = float(np.linalg.norm(direction))
        if norm == 0 or not math.isfinite(norm):
            break
        step = initial_step / norm
        improved = False
        for _ in range(config.max_backtracks + 1):
            candidate = project(position + step * direction)
            candidate_value = objective(candidate)
            if candidate_value > value:
                improved = True
                break
            step *= config.armijo_factor
        if not improved:
            break
        gain = candidate_value - value
        position, value = candidate, candidate_value
        trace.append(value)
        accepted += 1
        if gain <= config.tolerance * max(abs(value), 1e-300):
            break
    logger.debug("%s ascent: %d accepted steps, objective %.6g -> %.6g", label, accepted, trace[0], trace[-1])
    return PgaResult(positions=position, objective_trace=trace, iterations=iterations, accepted_steps=accepted)


def pga_tx(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    rho: float,
    aleph: np.ndarray,
    config: Optional[PgaConfig] = None,
    *,
    priors: Optional[np.ndarray] = None,
) -> PgaResult:
    """Transmit positions improving the weighted objective; every iterate is feasible."""
    config = config or PgaConfig()

    def project(candidate: np.ndarray) -> np.ndarray:
        if config.exact_projection:
            return project_ordered_exact(candidate, layout.tx_bounds, layout.min_spacing)
        return project_tx(candidate, layout.tx_bounds, layout.min_spacing, literal_anchor=config.literal_anchor)

    return _ascend(
        layout.tx_positions,
        lambda p: tx_objective(system, layout.with_tx(p, checked=False), beams, vehicles, rho, aleph, priors),
        lambda p: grad_tx(system, layout.with_tx(p, checked=False), beams, vehicles, rho, aleph, priors),
        project,
        config.tx_step_lambda * system.wavelength,
        config,
        "transmit",
    )


def pga_rx(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    config: Optional[PgaConfig] = None,
) -> PgaResult:
    """Receive positions improving Σ_k I_θθ; the distance and speed information do not move."""
    config = config or PgaConfig()

    def project(candidate: np.ndarray) -> np.ndarray:
        if config.exact_projection:
            return project_ordered_exact(candidate, layout.rx_bounds, layout.min_spacing)
        return project_rx(candidate, layout.rx_bounds, layout.min_spacing, literal_anchor=config.literal_anchor)

    return _ascend(
        layout.rx_positions,
        lambda p: rx_objective(system, layout.with_rx(p, checked=False), beams, vehicles),
        lambda p: grad_rx(system, layout.with_rx(p, checked=False), beams, vehicles),
        project,
        config.rx_step_lambda * system.wavelength,
        config,
        "receive",
    )

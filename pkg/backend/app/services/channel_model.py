"""Physical-layer primitives: steering vectors, gains, rates and post-matched-filter echoes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.errors import ConfigurationError, DomainError
from app.schemas.core import (
    ArrayLayout,
    BeamformerSet,
    EchoMeasurement,
    SystemConfig,
    VehicleState,
)


@dataclass(frozen=True)
class EchoParameters:
    """Derived per-vehicle quantities of the echo and downlink models."""

    path_loss: float
    attenuation: float
    gamma: float
    doppler: float
    delay: float


# ----------------------------------------------------------------------
# Geometry
def steering_from_cosine(positions: np.ndarray, cosine: float, wavelength: float) -> np.ndarray:
    return np.exp(2j * np.pi * np.asarray(positions, dtype=float) * cosine / wavelength)


def steering(positions: Sequence[float], theta: float, wavelength: float) -> np.ndarray:
    """Entry l is exp(j·2π·p_l·cosθ/λ)."""
    values = np.asarray(positions, dtype=float).reshape(-1)
    if not np.all(np.isfinite(values)):
        raise DomainError("Antenna positions must be finite.")
    if not math.isfinite(theta) or not 0.0 < theta < math.pi:
        raise DomainError(f"theta must lie in (0, pi) rad, got {theta}.")
    return steering_from_cosine(values, math.cos(theta), wavelength)


# ----------------------------------------------------------------------
# Gains
def channel_gains(system: SystemConfig, distance: float) -> tuple[float, float, float]:
    """(α, β, γ): downlink path loss, round-trip attenuation and γ = β·T_e."""
    if not math.isfinite(distance) or distance <= 0:
        raise DomainError(f"distance must be positive, got {distance}.")
    path_loss = system.ref_path_loss * (distance / system.ref_distance) ** (-system.path_loss_exponent)
    attenuation = math.sqrt(
        system.wavelength ** 2 * system.radar_cross_section
        / ((4 * math.pi) ** 3 * (distance / 2) ** 4)
    )
    return path_loss, attenuation, attenuation * system.useful_duration


def echo_parameters(system: SystemConfig, vehicle: VehicleState) -> EchoParameters:
    path_loss, attenuation, gamma = channel_gains(system, vehicle.distance)
    return EchoParameters(
        path_loss=path_loss,
        attenuation=attenuation,
        gamma=gamma,
        doppler=2 * math.cos(vehicle.theta) * vehicle.speed / system.wavelength,
        delay=2 * vehicle.distance / system.lightspeed,
    )


# ----------------------------------------------------------------------
# Beams
def beam_response(layout: ArrayLayout, beams: np.ndarray, theta: float, wavelength: float) -> np.ndarray:
    """a(p_tx, θ)^H w_n for every subcarrier."""
    return np.asarray(beams, dtype=complex) @ steering(layout.tx_positions, theta, wavelength).conj()


def matched_beams(
    system: SystemConfig,
    layout: ArrayLayout,
    vehicles: Sequence[VehicleState],
    assignment: np.ndarray,
    powers: Optional[np.ndarray] = None,
) -> BeamformerSet:
    """Beams steered at each subcarrier's vehicle; uniform power unless given."""
    assignment = np.asarray(assignment, dtype=int)
    if assignment.size != system.num_subcarriers:
        raise ConfigurationError("The subcarrier map needs one entry per subcarrier.")
    beams = np.stack([
        steering(layout.tx_positions, vehicles[index].theta, system.wavelength) for index in assignment
    ])
    if powers is None:
        powers = np.full(system.num_subcarriers, system.total_power / system.num_subcarriers)
    return BeamformerSet(beams=beams, powers=powers, assignment=assignment)


def rate_coefficients(
    system: SystemConfig, vehicles: Sequence[VehicleState], assignment: np.ndarray
) -> np.ndarray:
    """α_k(n)·T_e/η0 per subcarrier (1/W per unit beam gain)."""
    losses = np.array([channel_gains(system, vehicle.distance)[0] for vehicle in vehicles])
    return losses[np.asarray(assignment, dtype=int)] * system.useful_duration / system.comm_noise_psd


def effective_gains(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    """ĝ_n = α_k|a^H w_n|²T_e/η0 for the vehicle served on subcarrier n."""
    _check_assignment(beams, vehicles)
    gains = np.empty(beams.num_subcarriers)
    for index, vehicle in enumerate(vehicles):
        carriers = beams.subcarriers(index)
        if carriers.size == 0:
            continue
        response = beam_response(layout, beams.beams[carriers], vehicle.theta, system.wavelength)
        gains[carriers] = np.abs(response) ** 2
    return gains * rate_coefficients(system, vehicles, beams.assignment)


def subcarrier_rates(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    return np.log2(1.0 + effective_gains(system, layout, beams, vehicles) * beams.powers)


def sum_rate(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> float:
    """Σ_k Σ_{n∈𝒩_k} log2(1 + SNR_n) in bits per OFDM symbol."""
    return float(np.sum(subcarrier_rates(system, layout, beams, vehicles)))


def mean_subcarrier_rate(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> float:
    return sum_rate(system, layout, beams, vehicles) / beams.num_subcarriers


def _check_assignment(beams: BeamformerSet, vehicles: Sequence[VehicleState]) -> None:
    if beams.assignment.size and beams.assignment.max() >= len(vehicles):
        raise ConfigurationError("Subcarrier map references an unknown vehicle.")


# ----------------------------------------------------------------------
# Echoes
def noiseless_echo_from_observables(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    gammas: Sequence[float],
    observables: np.ndarray,
) -> np.ndarray:
    """Echo samples (N, Q, M_rx) from per-vehicle (cosθ, τ, μ) with fixed γ.

    The angle enters through its cosine, the first observable, so the
    derivatives of this map are the u-coordinate Jacobian.
    """
    observables = np.asarray(observables, dtype=float).reshape(-1, 3)
    subcarrier = np.arange(system.num_subcarriers)
    block = np.arange(system.num_blocks)
    samples = np.zeros((system.num_subcarriers, system.num_blocks, layout.num_rx), dtype=complex)
    for gamma, (cosine, delay, doppler) in zip(gammas, observables):
        transmit = steering_from_cosine(layout.tx_positions, cosine, system.wavelength)
        receive = steering_from_cosine(layout.rx_positions, cosine, system.wavelength)
        response = beams.beams @ transmit.conj()
        delay_phase = np.exp(-2j * np.pi * subcarrier * system.subcarrier_spacing * delay)
        doppler_phase = np.exp(2j * np.pi * doppler * block * system.symbol_duration)
        amplitude = gamma * beams.powers * response * delay_phase
        samples += amplitude[:, None, None] * doppler_phase[None, :, None] * receive[None, None, :]
    return samples


def observables(system: SystemConfig, vehicles: Sequence[VehicleState]) -> np.ndarray:
    rows = []
    for vehicle in vehicles:
        params = echo_parameters(system, vehicle)
        rows.append((math.cos(vehicle.theta), params.delay, params.doppler))
    return np.array(rows, dtype=float).reshape(-1, 3)


def noiseless_echo(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    gammas = [echo_parameters(system, vehicle).gamma for vehicle in vehicles]
    return noiseless_echo_from_observables(system, layout, beams, gammas, observables(system, vehicles))


def echo_noise_variance(system: SystemConfig, beams: BeamformerSet) -> np.ndarray:
    """Per-subcarrier noise variance p_n·η1·T_e."""
    return beams.powers * system.radar_noise_psd * system.useful_duration


def synth_echo(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    rng_seed: Optional[int | np.random.Generator] = None,
    *,
    noise: bool = True,
) -> EchoMeasurement:
    """Noiseless echo plus circular complex Gaussian noise, deterministic per seed."""
    samples = noiseless_echo(system, layout, beams, vehicles)
    variance = echo_noise_variance(system, beams)
    if noise:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        scale = np.sqrt(variance / 2.0)[:, None, None]
        samples = samples + scale * (rng.standard_normal(samples.shape) + 1j * rng.standard_normal(samples.shape))
    return EchoMeasurement(samples=samples, noise_variance=variance)


def echo_jacobian(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    """∂x̃/∂u stacked as (M_rx·Q·N, 3K), columns (φ, τ, μ) per vehicle, φ = cosθ."""
    subcarrier = np.arange(system.num_subcarriers)
    block = np.arange(system.num_blocks)
    wavelength = system.wavelength
    columns = []
    for vehicle in vehicles:
        params = echo_parameters(system, vehicle)
        transmit = steering(layout.tx_positions, vehicle.theta, wavelength)
        receive = steering(layout.rx_positions, vehicle.theta, wavelength)
        response = beams.beams @ transmit.conj()
        weighted = beams.beams @ (layout.tx_positions * transmit.conj())
        delay_phase = np.exp(-2j * np.pi * subcarrier * system.subcarrier_spacing * params.delay)
        doppler_phase = np.exp(2j * np.pi * params.doppler * block * system.symbol_duration)
        base = (params.gamma * beams.powers * delay_phase)[:, None, None] * doppler_phase[None, :, None]
        echo = base * receive[None, None, :] * response[:, None, None]
        angle = (2j * np.pi / wavelength) * base * receive[None, None, :] * (
            layout.rx_positions[None, None, :] * response[:, None, None] - weighted[:, None, None]
        )
        delay = (-2j * np.pi * subcarrier * system.subcarrier_spacing)[:, None, None] * echo
        doppler = (2j * np.pi * block * system.symbol_duration)[None, :, None] * echo
        columns.extend([angle.reshape(-1), delay.reshape(-1), doppler.reshape(-1)])
    return np.stack(columns, axis=1)

"""Extended Kalman filter over the stacked echo, run in information form.

The state is real and the measurement complex: the observed information is
Re(H^H Σ^{-1} H) and the gain is applied through its real part. The
information form avoids inverting the M_rx·Q·N-dimensional innovation
covariance; `direct_covariance_update` keeps the textbook form for checks.
"""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from app.core.errors import ConfigurationError
from app.schemas.core import ArrayLayout, BeamformerSet, EchoMeasurement, SystemConfig, VehicleState, vehicles_from_array
from app.schemas.tracking import MotionModel, TrackingConfig, TrackState
from app.services import channel_model
from app.services.fisher_service import predicted_information, stacked_chain
from app.services.kinematics import motion_jacobian, propagate_state
from app.services.linalg import spd_inverse, symmetrize

logger = logging.getLogger(__name__)


def measurement_jacobian(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    """∂x̃/∂ζ: the u-coordinate echo Jacobian times the stacked chain Q^T."""
    return channel_model.echo_jacobian(system, layout, beams, vehicles) @ stacked_chain(system, vehicles).T


def jacobians(
    estimate: np.ndarray,
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    motion: MotionModel,
) -> Tuple[np.ndarray, np.ndarray]:
    """(G, H) at `estimate`: motion Jacobian (3K, 3K) and complex measurement Jacobian."""
    states = np.asarray(estimate, dtype=float).reshape(-1, 3)
    transition = motion_jacobian(states, motion)
    return transition, measurement_jacobian(system, layout, beams, vehicles_from_array(states))


def predict_track(track: TrackState, motion: MotionModel) -> Tuple[np.ndarray, np.ndarray]:
    """Predicted mean ζ̂_{m|m−1} (K, 3) and prior information 𝒥^P = (GΘGᵀ + Σ_ζ)^{-1}."""
    transition = motion_jacobian(track.estimate, motion)
    predicted = propagate_state(track.estimate, motion)
    prior = predicted_information(track.covariance, transition, motion.process_covariance(track.num_vehicles))
    return predicted, prior


def ekf_step(
    track: TrackState,
    measurement: EchoMeasurement,
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    motion: MotionModel,
) -> TrackState:
    """Predict, then update with the echo measured under `beams`."""
    slot = track.slot + 1
    expected = system.num_subcarriers * system.num_blocks * layout.num_rx
    if measurement.stacked.size != expected:
        raise ConfigurationError(f"Echo has {measurement.stacked.size} samples, expected {expected}.")
    transition = motion_jacobian(track.estimate, motion)
    predicted = propagate_state(track.estimate, motion)
    prior = spd_inverse(
        transition @ track.covariance @ transition.T + motion.process_covariance(track.num_vehicles),
        what="predicted covariance",
        slot=slot,
    )
    vehicles = vehicles_from_array(predicted)
    sensitivity = measurement_jacobian(system, layout, beams, vehicles)
    weights = measurement.element_weights
    observed = symmetrize(np.real(sensitivity.conj().T @ (weights[:, None] * sensitivity)))
    covariance = spd_inverse(prior + observed, what="posterior information", slot=slot)

    innovation = measurement.stacked - channel_model.noiseless_echo(system, layout, beams, vehicles).reshape(-1)
    correction = covariance @ np.real(sensitivity.conj().T @ (weights * innovation))
    estimate = predicted + correction.reshape(-1, 3)
    logger.debug("EKF slot %d: correction norm %.3e", slot, float(np.linalg.norm(correction)))
    return TrackState(
        estimate=estimate,
        covariance=covariance,
        slot=slot,
        prior_information=prior,
        observed_information=observed,
    )


def direct_covariance_update(
    predicted_covariance: np.ndarray,
    sensitivity: np.ndarray,
    noise_variance: np.ndarray,
) -> np.ndarray:
    """(I − KH)Θ_pred with K = Θ_pred Hᵀ(HΘ_pred Hᵀ + R)^{-1} on the real-stacked measurement.

    Real and imaginary rows share the per-element variance, which matches
    the Re(H^H Σ^{-1} H) information convention; zero-variance rows are dropped.
    """
    variance = np.asarray(noise_variance, dtype=float).reshape(-1)
    keep = variance > 0
    stacked = np.vstack([sensitivity.real[keep], sensitivity.imag[keep]])
    noise = np.concatenate([variance[keep], variance[keep]])
    innovation = stacked @ predicted_covariance @ stacked.T + np.diag(noise)
    gain = linalg.solve(innovation, stacked @ predicted_covariance, assume_a="pos").T
    updated = predicted_covariance - gain @ stacked @ predicted_covariance
    return symmetrize(updated)


def initial_track(
    states: np.ndarray,
    tracking: TrackingConfig,
    rng_seed: Optional[int | np.random.Generator] = None,
) -> TrackState:
    """Ground truth perturbed by the configured initial stddevs, with the matching covariance."""
    states = np.asarray(states, dtype=float).reshape(-1, 3)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    sigmas = np.array([tracking.init_sigma_theta, tracking.init_sigma_distance, tracking.init_sigma_speed])
    estimate = states + rng.standard_normal(states.shape) * sigmas
    return TrackState(estimate=estimate, covariance=tracking.initial_covariance(states.shape[0]), slot=0)

"""Vehicle motion between slots: linearised propagation, its Jacobian and the exact geometry."""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import block_diag

from app.core.errors import DomainError
from app.schemas.tracking import MotionModel


def _as_states(zeta: np.ndarray) -> np.ndarray:
    states = np.asarray(zeta, dtype=float).reshape(-1, 3)
    if np.any(states[:, 0] <= 0) or np.any(states[:, 0] >= np.pi):
        raise DomainError("theta must lie in (0, pi) rad.")
    if np.any(states[:, 1] <= 0):
        raise DomainError("distance must be positive.")
    return states


def _check_result(states: np.ndarray) -> np.ndarray:
    if np.any(states[:, 1] <= 0):
        raise DomainError("Propagated distance is not positive; the vehicle passed the RSU.")
    if np.any(states[:, 0] <= 0) or np.any(states[:, 0] >= np.pi):
        raise DomainError("Propagated angle left (0, pi).")
    return states


def propagate_state(
    zeta: np.ndarray,
    motion: MotionModel,
    rng: Optional[np.random.Generator] = None,
    speed_increment: Optional[np.ndarray] = None,
) -> np.ndarray:
    """One slot of θ' = θ + νΔT·sinθ/d, d' = d − νΔT·cosθ, ν' = ν + Δν.

    Without `rng` the step is noiseless and Δν defaults to the mean increment.
    """
    states = _as_states(zeta)
    theta, distance, speed = states.T
    step = motion.slot_duration
    count = states.shape[0]
    if speed_increment is not None:
        increment = np.broadcast_to(np.asarray(speed_increment, dtype=float), (count,))
    elif rng is None:
        increment = np.full(count, motion.mean_speed_increment)
    else:
        increment = rng.uniform(motion.speed_increment_min, motion.speed_increment_max, size=count)

    result = np.column_stack([
        theta + speed * step * np.sin(theta) / distance,
        distance - speed * step * np.cos(theta),
        speed + increment,
    ])
    if rng is not None:
        sigmas = np.array([motion.sigma_theta, motion.sigma_distance, motion.sigma_speed])
        result = result + rng.standard_normal(result.shape) * sigmas
    return _check_result(result)


def propagate_exact(zeta: np.ndarray, motion: MotionModel, speed_increment: Optional[np.ndarray] = None) -> np.ndarray:
    """Noiseless straight-line motion solved exactly (law of cosines / sines)."""
    states = _as_states(zeta)
    theta, distance, speed = states.T
    travelled = speed * motion.slot_duration
    x = distance * np.cos(theta) - travelled
    y = distance * np.sin(theta)
    increment = motion.mean_speed_increment if speed_increment is None else np.asarray(speed_increment, dtype=float)
    result = np.column_stack([np.arctan2(y, x), np.hypot(x, y), speed + increment])
    return _check_result(result)


def motion_jacobian(zeta: np.ndarray, motion: MotionModel) -> np.ndarray:
    """Block-diagonal ∂ζ'/∂ζ of the linearised model, (3K, 3K)."""
    states = _as_states(zeta)
    step = motion.slot_duration
    blocks = []
    for theta, distance, speed in states:
        sine, cosine = np.sin(theta), np.cos(theta)
        blocks.append(np.array([
            [1 + speed * step * cosine / distance, -speed * step * sine / distance ** 2, step * sine / distance],
            [speed * step * sine, 1.0, -step * cosine],
            [0.0, 0.0, 1.0],
        ]))
    return block_diag(*blocks)

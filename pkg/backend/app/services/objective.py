"""Weighted-sum objective of the joint design and the sensing metrics it is built from."""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from app.schemas.core import ArrayLayout, BeamformerSet, SystemConfig, VehicleState
from app.schemas.optimization import AlephPolicy, QosThresholds
from app.services import channel_model
from app.services.fisher_service import bound_values, information_terms, zeta_fims

logger = logging.getLogger(__name__)

PARAMETER_NAMES = ("theta", "distance", "speed")


def information_matrices(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    priors: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(K, 3, 3) observed ζ-information per vehicle, plus the prior blocks when given."""
    matrices = np.stack([fim.matrix for fim in zeta_fims(system, layout, beams, vehicles)])
    if priors is not None:
        matrices = matrices + np.asarray(priors, dtype=float).reshape(matrices.shape)
    return matrices


def sensing_terms(matrices: np.ndarray) -> np.ndarray:
    return np.stack([information_terms(matrix) for matrix in np.asarray(matrices).reshape(-1, 3, 3)])


def aleph_factors(
    policy: AlephPolicy,
    matrices: np.ndarray,
    fixed: Optional[Sequence[float]] = None,
) -> np.ndarray:
    """Quantisation factors ℵ that bring each sensing term to unit magnitude at `matrices`."""
    if policy == AlephPolicy.FIXED:
        return np.asarray(fixed, dtype=float).reshape(3)
    totals = sensing_terms(matrices).sum(axis=0)
    factors = np.zeros(3)
    positive = totals > 0
    factors[positive] = 1.0 / totals[positive]
    if not np.all(positive):
        logger.warning("Sensing terms %s are not positive; their weight is set to 0.", totals)
    return factors


def sensing_value(matrices: np.ndarray, aleph: np.ndarray) -> float:
    """Σ_k ℵ·(I_θθ, Schur_d, Schur_ν)."""
    return float(np.sum(sensing_terms(matrices) @ np.asarray(aleph, dtype=float)))


def weighted_objective(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
    rho: float,
    aleph: np.ndarray,
    priors: Optional[np.ndarray] = None,
) -> float:
    rate = channel_model.sum_rate(system, layout, beams, vehicles)
    if rho >= 1.0:
        return rate
    matrices = information_matrices(system, layout, beams, vehicles, priors)
    return rho * rate + (1.0 - rho) * sensing_value(matrices, aleph)


def sensing_gradient(matrix: np.ndarray, aleph: np.ndarray) -> np.ndarray:
    """∂/∂I of ℵ·(I_θθ, I_dd − I_dν²/I_νν, I_νν − I_dν²/I_dd) as a symmetric 3×3 matrix.

    Off-diagonal entries carry half the derivative each, so that
    Σ_ij G_ij dI_ij is the first-order change for a symmetric dI.
    """
    matrix = np.asarray(matrix, dtype=float)
    dd, nn, dn = matrix[1, 1], matrix[2, 2], matrix[1, 2]
    first, second, third = np.asarray(aleph, dtype=float)
    gradient = np.zeros((3, 3))
    gradient[0, 0] = first
    gradient[1, 1] = second
    gradient[2, 2] = third
    if nn > 0:
        gradient[2, 2] += second * dn ** 2 / nn ** 2
        gradient[1, 2] -= second * dn / nn
    if dd > 0:
        gradient[1, 1] += third * dn ** 2 / dd ** 2
        gradient[1, 2] -= third * dn / dd
    gradient[2, 1] = gradient[1, 2]
    return gradient


# ----------------------------------------------------------------------
# QoS diagnostics
def bound_ratios(matrices: np.ndarray, thresholds: QosThresholds) -> np.ndarray:
    """(K, 3) LPCRLB / ς; inactive thresholds give 0."""
    limits = thresholds.as_array()
    bounds = np.stack([bound_values(matrix) for matrix in np.asarray(matrices).reshape(-1, 3, 3)])
    ratios = np.zeros_like(bounds)
    finite = np.isfinite(limits)
    ratios[:, finite] = bounds[:, finite] / limits[finite]
    return ratios


def tightest_constraint(ratios: np.ndarray) -> Tuple[str, float]:
    """Name and margin (ratio − 1) of the QoS constraint closest to, or furthest past, its limit."""
    ratios = np.asarray(ratios, dtype=float)
    vehicle, parameter = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    return f"{PARAMETER_NAMES[parameter]}[vehicle {vehicle}]", float(ratios[vehicle, parameter] - 1.0)

"""Fisher information of the echo model and the bounds derived from it.

u-coordinates per vehicle are (φ = cosθ, τ, μ); ζ-coordinates are (θ, d, ν).
All information is expressed per watt of subcarrier power, so every
observed matrix is linear in the power vector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.linalg import block_diag

from app.core.errors import ConfigurationError, InfeasibleBoundError
from app.schemas.core import ArrayLayout, BeamformerSet, SystemConfig, VehicleState
from app.schemas.optimization import PowerMode
from app.schemas.sensing import BoundTriple, FisherBlocks, ZetaFim
from app.schemas.tracking import MotionModel, TrackState
from app.services import channel_model
from app.services.kinematics import motion_jacobian
from app.services.linalg import RELATIVE_PIVOT, spd_inverse

logger = logging.getLogger(__name__)

# Basis index of the three beam quadratic forms.
XI, XI1, XR = 0, 1, 2


@dataclass(frozen=True)
class FisherConstants:
    """Scalar factors shared by every subcarrier of one vehicle."""

    gamma: float
    noise: float
    num_blocks: int
    num_rx: int
    rx_trace: float
    rx_square_trace: float
    wavelength: float
    subcarrier_spacing: float
    symbol_duration: float

    @classmethod
    def build(cls, system: SystemConfig, layout: ArrayLayout, vehicle: VehicleState) -> "FisherConstants":
        _, _, gamma = channel_model.channel_gains(system, vehicle.distance)
        return cls(
            gamma=gamma,
            noise=system.radar_noise_psd * system.useful_duration,
            num_blocks=system.num_blocks,
            num_rx=layout.num_rx,
            rx_trace=float(layout.rx_positions.sum()),
            rx_square_trace=float(np.sum(layout.rx_positions ** 2)),
            wavelength=system.wavelength,
            subcarrier_spacing=system.subcarrier_spacing,
            symbol_duration=system.symbol_duration,
        )


# ----------------------------------------------------------------------
# Quadratic forms of the beams
def quadratic_forms(
    tx_positions: np.ndarray, beams: np.ndarray, theta: float, wavelength: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Ξ, Ξ1, Ξ2) per subcarrier: |a^H w|², |a^H Λ w|², w^H Λ a a^H w."""
    transmit = channel_model.steering(tx_positions, theta, wavelength)
    response = np.asarray(beams, dtype=complex) @ transmit.conj()
    weighted = np.asarray(beams, dtype=complex) @ (np.asarray(tx_positions, dtype=float) * transmit.conj())
    return np.abs(response) ** 2, np.abs(weighted) ** 2, weighted.conj() * response


def form_matrices(tx_positions: np.ndarray, theta: float, wavelength: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hermitian (𝒢, 𝒦, 𝒮) with Ξ = Tr(𝒢W), Ξ1 = Tr(𝒦W), Re Ξ2 = Tr(𝒮W) for W = ww^H."""
    transmit = channel_model.steering(tx_positions, theta, wavelength)
    gram = np.outer(transmit, transmit.conj())
    position = np.diag(np.asarray(tx_positions, dtype=float))
    return gram, position @ gram @ position, 0.5 * (position @ gram + gram @ position)


# ----------------------------------------------------------------------
# Per-subcarrier information basis
def information_basis(system: SystemConfig, layout: ArrayLayout, vehicle: VehicleState) -> np.ndarray:
    """(N, 3, 3, 3): u-coordinate information per watt per unit of (Ξ, Ξ1, Re Ξ2)."""
    constants = FisherConstants.build(system, layout, vehicle)
    gamma, noise = constants.gamma, constants.noise
    blocks, rx = constants.num_blocks, constants.num_rx
    scale = blocks / noise
    frequency = np.arange(system.num_subcarriers) * constants.subcarrier_spacing
    wavelength = constants.wavelength
    symbol = constants.symbol_duration
    common = (2 * math.pi * gamma) ** 2 * scale

    basis = np.zeros((system.num_subcarriers, 3, 3, 3))
    angle = common / wavelength ** 2
    basis[:, XI, 0, 0] = angle * constants.rx_square_trace
    basis[:, XI1, 0, 0] = angle * rx
    basis[:, XR, 0, 0] = -2 * angle * constants.rx_trace

    angle_delay = -common * frequency / wavelength
    basis[:, XI, 0, 1] = angle_delay * constants.rx_trace
    basis[:, XR, 0, 1] = -angle_delay * rx

    angle_doppler = common * (blocks - 1) * symbol / (2 * wavelength)
    basis[:, XI, 0, 2] = angle_doppler * constants.rx_trace
    basis[:, XR, 0, 2] = -angle_doppler * rx

    basis[:, XI, 1, 1] = scale * (2 * math.pi * gamma * frequency) ** 2 * rx
    basis[:, XI, 2, 2] = (
        2 * blocks * (blocks - 1) * (2 * blocks - 1) * (math.pi * gamma * symbol) ** 2 * rx / (3 * noise)
    )
    basis[:, XI, 1, 2] = -2 * blocks * (blocks - 1) * (math.pi * gamma) ** 2 * frequency * symbol * rx / noise

    for first, second in ((0, 1), (0, 2), (1, 2)):
        basis[:, :, second, first] = basis[:, :, first, second]
    return basis


def chain_matrix(vehicle: VehicleState, wavelength: float, lightspeed: float) -> np.ndarray:
    """Q_kk with Q[i, j] = ∂u_j/∂ζ_i, rows (θ, d, ν), columns (φ, τ, μ)."""
    sine, cosine = math.sin(vehicle.theta), math.cos(vehicle.theta)
    return np.array([
        [-sine, 0.0, -2 * vehicle.speed * sine / wavelength],
        [0.0, 2 / lightspeed, 0.0],
        [0.0, 0.0, 2 * cosine / wavelength],
    ])


def zeta_basis(system: SystemConfig, layout: ArrayLayout, vehicle: VehicleState) -> np.ndarray:
    """Information basis mapped to (θ, d, ν) coordinates."""
    chain = chain_matrix(vehicle, system.wavelength, system.lightspeed)
    return np.einsum("ia,nbac,jc->nbij", chain, information_basis(system, layout, vehicle), chain)


# ----------------------------------------------------------------------
# g-blocks and ζ-coordinate FIM
def g_blocks(system: SystemConfig, layout: ArrayLayout, beams: BeamformerSet, vehicle: VehicleState) -> FisherBlocks:
    xi, xi1, xi2 = quadratic_forms(layout.tx_positions, beams.beams, vehicle.theta, system.wavelength)
    forms = np.stack([xi, xi1, xi2.real], axis=1)
    matrices = np.einsum("nb,nbij->nij", forms, information_basis(system, layout, vehicle))
    return FisherBlocks(
        g11=matrices[:, 0, 0],
        g12=matrices[:, 0, 1],
        g13=matrices[:, 0, 2],
        g22=matrices[:, 1, 1],
        g33=matrices[:, 2, 2],
        g23=matrices[:, 1, 2],
        vehicle=vehicle,
        wavelength=system.wavelength,
        lightspeed=system.lightspeed,
    )


def fim_zeta_block(blocks: FisherBlocks, vehicle: VehicleState, powers: np.ndarray) -> ZetaFim:
    powers = np.asarray(powers, dtype=float).reshape(-1)
    if powers.size != blocks.num_subcarriers:
        raise ConfigurationError("One power per subcarrier is required.")
    chain = chain_matrix(vehicle, blocks.wavelength, blocks.lightspeed)
    return ZetaFim(matrix=chain @ blocks.u_information(powers) @ chain.T, chain=chain, vehicle=vehicle)


def zeta_fims(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> List[ZetaFim]:
    """Principal 3×3 blocks of every vehicle at the beams' powers."""
    return [
        fim_zeta_block(g_blocks(system, layout, beams, vehicle), vehicle, beams.powers)
        for vehicle in vehicles
    ]


def fim_u(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    """Full (3K, 3K) u-coordinate FIM, cross-vehicle blocks included."""
    jacobian = channel_model.echo_jacobian(system, layout, beams, vehicles)
    weights = _element_weights(system, layout, beams)
    return np.real(jacobian.conj().T @ (weights[:, None] * jacobian))


def stacked_chain(system: SystemConfig, vehicles: Sequence[VehicleState]) -> np.ndarray:
    return block_diag(*[chain_matrix(vehicle, system.wavelength, system.lightspeed) for vehicle in vehicles])


def fim_zeta(
    system: SystemConfig,
    layout: ArrayLayout,
    beams: BeamformerSet,
    vehicles: Sequence[VehicleState],
) -> np.ndarray:
    chain = stacked_chain(system, vehicles)
    return chain @ fim_u(system, layout, beams, vehicles) @ chain.T


def _element_weights(system: SystemConfig, layout: ArrayLayout, beams: BeamformerSet) -> np.ndarray:
    variance = channel_model.echo_noise_variance(system, beams)
    weights = np.zeros_like(variance)
    active = variance > 0
    weights[active] = 1.0 / variance[active]
    return np.repeat(weights, system.num_blocks * layout.num_rx)


# ----------------------------------------------------------------------
# Bounds
def information_terms(matrix: np.ndarray) -> np.ndarray:
    """(θ, d, ν) information: I_θθ and the Schur complements of the d–ν block."""
    matrix = np.asarray(matrix, dtype=float)
    theta = matrix[0, 0]
    dd, nn, dn = matrix[1, 1], matrix[2, 2], matrix[1, 2]
    distance = dd - dn ** 2 / nn if nn > 0 else dd
    speed = nn - dn ** 2 / dd if dd > 0 else nn
    return np.array([theta, distance, speed])


def _reciprocal(value: float) -> float:
    return 1.0 / value if value > 0 else math.inf


def _dv_determinant(matrix: np.ndarray) -> Optional[float]:
    dd, nn, dn = matrix[1, 1], matrix[2, 2], matrix[1, 2]
    determinant = dd * nn - dn ** 2
    if dd <= 0 or nn <= 0 or determinant <= RELATIVE_PIVOT * dd * nn:
        return None
    return determinant


def bound_values(matrix: np.ndarray) -> np.ndarray:
    """(θ, d, ν) block-reduced bounds of one 3×3 information matrix, `inf` where unbounded."""
    matrix = np.asarray(matrix, dtype=float)
    determinant = _dv_determinant(matrix)
    if determinant is None:
        return np.array([_reciprocal(matrix[0, 0]), math.inf, math.inf])
    return np.array([_reciprocal(matrix[0, 0]), matrix[2, 2] / determinant, matrix[1, 1] / determinant])


def lcrlb(zeta_fim: ZetaFim) -> BoundTriple:
    """Block-reduced bounds; zero information gives an infinite bound."""
    return BoundTriple(*bound_values(zeta_fim.matrix))


def lpcrlb(zeta_fim: ZetaFim, prior_block: Optional[np.ndarray] = None) -> BoundTriple:
    total = zeta_fim.matrix if prior_block is None else zeta_fim.with_prior(prior_block)
    if _dv_determinant(total) is None:
        raise InfeasibleBoundError(
            "Distance/velocity information block is not positive definite "
            f"(d={total[1, 1]:.3e}, nu={total[2, 2]:.3e}, cross={total[1, 2]:.3e})."
        )
    return BoundTriple(*bound_values(total))


def block_inverse_diag(matrix: np.ndarray) -> np.ndarray:
    """Diagonal of the inverse of one 3×3 block."""
    return np.diag(spd_inverse(matrix, what="vehicle information block"))


def predicted_information(
    covariance: np.ndarray, transition: np.ndarray, process_covariance: np.ndarray
) -> np.ndarray:
    """(GΘGᵀ + Σ_ζ)^{-1}."""
    predicted = transition @ covariance @ transition.T + process_covariance
    return spd_inverse(predicted, what="predicted covariance")


def prior_fim(track: TrackState, motion: MotionModel) -> np.ndarray:
    transition = motion_jacobian(track.estimate, motion)
    try:
        return predicted_information(track.covariance, transition, motion.process_covariance(track.num_vehicles))
    except ArithmeticError as exc:
        logger.warning("Prior information unavailable at slot %s: %s", track.slot, exc)
        raise


def prior_blocks(prior: np.ndarray) -> np.ndarray:
    """(K, 3, 3) principal blocks of a (3K, 3K) prior."""
    prior = np.asarray(prior, dtype=float)
    count = prior.shape[0] // 3
    return np.stack([prior[3 * k:3 * k + 3, 3 * k:3 * k + 3] for k in range(count)])


def pcrlb_diag(observed: np.ndarray, prior: Optional[np.ndarray] = None, *, exact: bool = True) -> np.ndarray:
    """(K, 3) diagonal of (J^O + J^P)^{-1}; `exact=False` inverts the principal blocks only."""
    total = np.asarray(observed, dtype=float)
    if prior is not None:
        total = total + np.asarray(prior, dtype=float)
    if exact:
        return np.diag(spd_inverse(total, what="posterior information")).reshape(-1, 3)
    return np.stack([block_inverse_diag(block) for block in prior_blocks(total)])


def observed_blocks(fims: Iterable[ZetaFim]) -> np.ndarray:
    return block_diag(*[fim.matrix for fim in fims])


# ----------------------------------------------------------------------
# Parameter sweeps of the block-reduced bounds
def noise_psd_for_snr(system: SystemConfig, vehicle: VehicleState, snr_db: float, reference_power: float) -> float:
    """η1 such that γ²·p_ref/(η1·T_e) equals the requested SNR."""
    _, _, gamma = channel_model.channel_gains(system, vehicle.distance)
    return gamma ** 2 * reference_power / (system.useful_duration * 10 ** (snr_db / 10))


def vehicle_bounds(
    system: SystemConfig,
    num_tx: int,
    num_rx: int,
    vehicle: VehicleState,
    powers: np.ndarray,
) -> BoundTriple:
    """LCRLB of a single vehicle with half-wavelength arrays and matched beams."""
    layout = ArrayLayout.half_wavelength(
        system.wavelength, num_tx, num_rx, max(num_tx, num_rx) * system.wavelength / 2
    )
    beams = channel_model.matched_beams(
        system, layout, [vehicle], np.zeros(system.num_subcarriers, dtype=int), powers
    )
    blocks = g_blocks(system, layout, beams, vehicle)
    return lcrlb(fim_zeta_block(blocks, vehicle, beams.powers))


def bound_sweep(
    system: SystemConfig,
    num_tx: int,
    num_rx: int,
    vehicle: VehicleState,
    parameter: str,
    values: Sequence[int],
    *,
    snr_db: Optional[float] = None,
    power_mode: PowerMode = PowerMode.PER_SUBCARRIER,
) -> pd.DataFrame:
    """LCRLB table while one of num_rx, num_subcarriers or num_blocks varies.

    The SNR and per-subcarrier reference power are fixed by the base system;
    `power_mode` decides whether added subcarriers bring their own power or
    share the base budget. Angle and Doppler information both scale with
    Σp_n: under TOTAL the angle bound is flat in N and the speed bound
    drifts up with the delay/Doppler coupling.
    """
    if parameter not in {"num_rx", "num_subcarriers", "num_blocks"}:
        raise ConfigurationError(f"Unknown sweep parameter {parameter!r}.", field="parameter")
    reference_power = system.total_power / system.num_subcarriers
    base = system
    if snr_db is not None:
        base = replace(system, radar_noise_psd=noise_psd_for_snr(system, vehicle, snr_db, reference_power))

    rows = []
    for value in values:
        current, receive = base, num_rx
        if parameter == "num_rx":
            receive = int(value)
        else:
            current = replace(base, **{parameter: int(value)})
        if power_mode == PowerMode.PER_SUBCARRIER:
            powers = np.full(current.num_subcarriers, reference_power)
        else:
            powers = np.full(current.num_subcarriers, current.total_power / current.num_subcarriers)
        bound = vehicle_bounds(current, num_tx, receive, vehicle, powers)
        rows.append({
            "parameter": parameter,
            "value": int(value),
            "lcrlb_theta": bound.theta,
            "lcrlb_d": bound.distance,
            "lcrlb_nu": bound.speed,
        })
    logger.debug("Bound sweep over %s: %d points", parameter, len(rows))
    return pd.DataFrame(rows)

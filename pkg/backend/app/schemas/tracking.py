"""Kinematic model and EKF state containers."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from app.core.errors import ConditioningError, ConfigurationError, DomainError
from app.schemas.core import VehicleState, vehicles_from_array


@dataclass(frozen=True)
class MotionModel:
  """Linearised constant-heading kinematics with additive Gaussian noise.

  The process stddevs and slot duration are assumed values; see
  ASSUMED_DEFAULTS in the config loader.
  """

  slot_duration: float = 0.02
  sigma_theta: float = 1e-4
  sigma_distance: float = 0.05
  sigma_speed: float = 0.1
  speed_increment_min: float = -0.2
  speed_increment_max: float = 0.2

  def __post_init__(self) -> None:
    if not math.isfinite(self.slot_duration) or self.slot_duration <= 0:
      raise ConfigurationError("slot_duration must be positive.", field="slot_duration")
    for name in ("sigma_theta", "sigma_distance", "sigma_speed"):
      if getattr(self, name) < 0:
        raise ConfigurationError(f"{name} cannot be negative.", field=name)
    if self.speed_increment_min > self.speed_increment_max:
      raise ConfigurationError("speed_increment_min must not exceed speed_increment_max.")

  @property
  def speed_increment_variance(self) -> float:
    """Variance of Δν ~ U[min, max]."""
    return (self.speed_increment_max - self.speed_increment_min) ** 2 / 12.0

  @property
  def mean_speed_increment(self) -> float:
    return 0.5 * (self.speed_increment_min + self.speed_increment_max)

  def process_covariance(self, num_vehicles: int) -> np.ndarray:
    """Σ_ζ as seen by the filter: the unknown Δν is folded into the speed variance."""
    block = np.array([
      self.sigma_theta ** 2,
      self.sigma_distance ** 2,
      self.sigma_speed ** 2 + self.speed_increment_variance,
    ])
    return np.diag(np.tile(block, num_vehicles))

  def noiseless(self) -> "MotionModel":
    return replace(self, sigma_theta=0.0, sigma_distance=0.0, sigma_speed=0.0)


@dataclass(frozen=True)
class TrackingConfig:
  """Initial-estimate perturbation used in place of a dedicated acquisition stage."""

  init_sigma_theta: float = 1e-3
  init_sigma_distance: float = 0.5
  init_sigma_speed: float = 0.5
  echo_noise: bool = True

  def __post_init__(self) -> None:
    for name in ("init_sigma_theta", "init_sigma_distance", "init_sigma_speed"):
      if getattr(self, name) < 0:
        raise ConfigurationError(f"{name} cannot be negative.", field=name)

  def initial_covariance(self, num_vehicles: int) -> np.ndarray:
    block = np.array([
      max(self.init_sigma_theta, 1e-9) ** 2,
      max(self.init_sigma_distance, 1e-9) ** 2,
      max(self.init_sigma_speed, 1e-9) ** 2,
    ])
    return np.diag(np.tile(block, num_vehicles))


@dataclass(eq=False)
class TrackState:
  """EKF estimate ζ̂ (K, 3) and its MSE matrix Θ (3K, 3K)."""

  estimate: np.ndarray
  covariance: np.ndarray
  slot: int = 0
  prior_information: Optional[np.ndarray] = None
  observed_information: Optional[np.ndarray] = None

  def __post_init__(self) -> None:
    self.estimate = np.asarray(self.estimate, dtype=float).reshape(-1, 3)
    dimension = 3 * self.estimate.shape[0]
    self.covariance = np.asarray(self.covariance, dtype=float)
    if self.covariance.shape != (dimension, dimension):
      raise ConfigurationError(
        f"Covariance must be {dimension}x{dimension}, got {self.covariance.shape}."
      )
    self.covariance = 0.5 * (self.covariance + self.covariance.T)
    if np.any(self.estimate[:, 0] <= 0) or np.any(self.estimate[:, 0] >= math.pi):
      raise DomainError(f"Tracked angle left (0, pi) at slot {self.slot}.")
    if np.any(self.estimate[:, 1] <= 0):
      raise DomainError(f"Tracked distance became non-positive at slot {self.slot}.")
    eigenvalues = np.linalg.eigvalsh(self.covariance)
    if eigenvalues[0] <= 0:
      raise ConditioningError("Track covariance is not positive definite", slot=self.slot)

  @property
  def num_vehicles(self) -> int:
    return int(self.estimate.shape[0])

  @property
  def stacked(self) -> np.ndarray:
    return self.estimate.reshape(-1)

  def vehicles(self) -> List[VehicleState]:
    return vehicles_from_array(self.estimate)

  def block(self, vehicle_index: int) -> np.ndarray:
    rows = slice(3 * vehicle_index, 3 * vehicle_index + 3)
    return self.covariance[rows, rows]

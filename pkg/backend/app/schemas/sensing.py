"""Fisher-information containers for the sensing bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from app.core.errors import DomainError
from app.schemas.core import VehicleState


@dataclass(eq=False)
class FisherBlocks:
  """Per-unit-power information of one vehicle in (φ, τ, μ) coordinates, one entry per subcarrier.

  Index 1 is the departure angle φ, 2 the delay τ and 3 the Doppler μ.
  """

  g11: np.ndarray
  g12: np.ndarray
  g13: np.ndarray
  g22: np.ndarray
  g33: np.ndarray
  g23: np.ndarray
  vehicle: VehicleState
  wavelength: float
  lightspeed: float

  def __post_init__(self) -> None:
    for name in ("g11", "g12", "g13", "g22", "g33", "g23"):
      setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
    if np.any(self.g22 < -1e-12 * max(1.0, float(np.abs(self.g22).max(initial=0.0)))):
      raise DomainError("g22 must be entrywise nonnegative.")
    if np.any(self.g33 < -1e-12 * max(1.0, float(np.abs(self.g33).max(initial=0.0)))):
      raise DomainError("g33 must be entrywise nonnegative.")

  @property
  def num_subcarriers(self) -> int:
    return int(self.g11.size)

  def per_subcarrier(self) -> np.ndarray:
    """(N, 3, 3) information matrices in u coordinates at unit power."""
    matrices = np.empty((self.num_subcarriers, 3, 3))
    matrices[:, 0, 0] = self.g11
    matrices[:, 1, 1] = self.g22
    matrices[:, 2, 2] = self.g33
    matrices[:, 0, 1] = matrices[:, 1, 0] = self.g12
    matrices[:, 0, 2] = matrices[:, 2, 0] = self.g13
    matrices[:, 1, 2] = matrices[:, 2, 1] = self.g23
    return matrices

  def u_information(self, powers: np.ndarray) -> np.ndarray:
    """J_kk = Σ_n p_n · G_n (3×3, u coordinates)."""
    weights = np.asarray(powers, dtype=float).reshape(-1)
    return np.einsum("n,nij->ij", weights, self.per_subcarrier())


@dataclass(eq=False)
class ZetaFim:
  """3×3 information block of one vehicle in (θ, d, ν) coordinates."""

  matrix: np.ndarray
  chain: np.ndarray
  vehicle: VehicleState

  def __post_init__(self) -> None:
    self.matrix = np.asarray(self.matrix, dtype=float).reshape(3, 3)
    self.chain = np.asarray(self.chain, dtype=float).reshape(3, 3)

  def with_prior(self, prior: np.ndarray) -> np.ndarray:
    return self.matrix + np.asarray(prior, dtype=float).reshape(3, 3)


@dataclass(frozen=True)
class BoundTriple:
  """Variance bounds in rad², m² and (m/s)²; `inf` marks an unbounded estimate."""

  theta: float
  distance: float
  speed: float

  def __post_init__(self) -> None:
    for name in ("theta", "distance", "speed"):
      value = getattr(self, name)
      if math.isnan(value) or value <= 0:
        raise DomainError(f"Bound {name} must be positive, got {value}.")

  def as_array(self) -> np.ndarray:
    return np.array([self.theta, self.distance, self.speed], dtype=float)

  def stddevs(self) -> np.ndarray:
    return np.sqrt(self.as_array())

  def satisfies(self, thresholds: np.ndarray, *, slack: float = 0.0) -> bool:
    limits = np.asarray(thresholds, dtype=float) * (1.0 + slack)
    return bool(np.all(self.as_array() <= limits))

"""Solver settings and result containers for beamforming, power and antenna optimisation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from app.core.errors import ConfigurationError
from app.schemas.core import ArrayLayout, BeamformerSet


class ObjectiveMode(str, Enum):
  WEIGHTED = "weighted"
  QOS = "qos"


class AlephPolicy(str, Enum):
  UNIT = "unit"
  FIXED = "fixed"


class Movement(str, Enum):
  BOTH = "both"
  TX = "tx"
  RX = "rx"
  NONE = "none"

  @property
  def moves_tx(self) -> bool:
    return self in (Movement.BOTH, Movement.TX)

  @property
  def moves_rx(self) -> bool:
    return self in (Movement.BOTH, Movement.RX)


class PowerMode(str, Enum):
  PER_SUBCARRIER = "per_subcarrier"
  TOTAL = "total"


@dataclass(frozen=True)
class QosThresholds:
  """Maximum admissible LPCRLBs (rad², m², (m/s)²); `inf` disables a constraint."""

  theta: float
  distance: float
  speed: float

  def __post_init__(self) -> None:
    for name in ("theta", "distance", "speed"):
      value = getattr(self, name)
      if math.isnan(value) or value <= 0:
        raise ConfigurationError(f"QoS threshold {name} must be positive.", field=name)

  def as_array(self) -> np.ndarray:
    return np.array([self.theta, self.distance, self.speed], dtype=float)

  def scaled(self, factor: float) -> "QosThresholds":
    return QosThresholds(self.theta * factor, self.distance * factor, self.speed * factor)

  @property
  def is_inactive(self) -> bool:
    return all(math.isinf(value) for value in self.as_array())


@dataclass(frozen=True)
class SolverSettings:
  """Tolerances of the convex subproblems and of the alternating loop."""

  backend: str = "CLARABEL"
  tolerance: float = 1e-6
  max_sca_iterations: int = 20
  sca_tolerance: float = 1e-4
  randomization_samples: int = 100
  rank_penalty: float = 0.1
  max_outer_iterations: int = 100
  outer_tolerance: float = 1e-4
  qos_slack: float = 0.05
  tightening_rounds: int = 3
  tightening_factor: float = 0.9
  seed: int = 0

  def __post_init__(self) -> None:
    if self.tolerance <= 0 or self.sca_tolerance <= 0 or self.outer_tolerance <= 0:
      raise ConfigurationError("Solver tolerances must be positive.")
    if self.max_sca_iterations < 1 or self.max_outer_iterations < 1:
      raise ConfigurationError("Iteration caps must be at least 1.")
    if self.randomization_samples < 0:
      raise ConfigurationError("randomization_samples cannot be negative.")
    if self.rank_penalty < 0:
      raise ConfigurationError("rank_penalty cannot be negative.", field="rank_penalty")
    if not 0 < self.tightening_factor < 1:
      raise ConfigurationError("tightening_factor must lie in (0, 1).")


@dataclass(frozen=True)
class PgaConfig:
  """Backtracking projected-gradient settings; steps are in wavelengths per unit-norm gradient."""

  tx_step_lambda: float = 0.1
  rx_step_lambda: float = 0.1
  armijo_factor: float = 0.5
  max_backtracks: int = 30
  max_iterations: int = 100
  tolerance: float = 1e-6
  literal_anchor: bool = False
  exact_projection: bool = False

  def __post_init__(self) -> None:
    if self.tx_step_lambda <= 0 or self.rx_step_lambda <= 0:
      raise ConfigurationError("PGA steps must be positive.")
    if not 0 < self.armijo_factor < 1:
      raise ConfigurationError("armijo_factor must lie in (0, 1).")
    if self.max_iterations < 0 or self.max_backtracks < 0:
      raise ConfigurationError("PGA iteration caps cannot be negative.")


@dataclass(frozen=True)
class SwarmConfig:
  particles: int = 10
  iterations: int = 20
  inertia_min: float = 0.4
  inertia_max: float = 0.9
  cognitive: float = 1.5
  social: float = 1.5
  velocity_scale: float = 0.2
  reflection_scale: float = 0.5
  prune_scale: float = 0.5
  penalty: float = 50.0
  retention_threshold: int = 6
  seed: int = 0
  warm_start: bool = False

  def __post_init__(self) -> None:
    if self.particles < 2:
      raise ConfigurationError("The swarm needs at least 2 particles.", field="particles")
    if self.iterations < 0:
      raise ConfigurationError("iterations cannot be negative.", field="iterations")
    if self.inertia_min > self.inertia_max:
      raise ConfigurationError("inertia_min must not exceed inertia_max.")
    for name in ("velocity_scale", "reflection_scale", "prune_scale"):
      value = getattr(self, name)
      if not 0.0 <= value <= 1.0:
        raise ConfigurationError(f"{name} must lie in [0, 1].", field=name)
    if self.penalty <= 0:
      raise ConfigurationError("penalty must be positive.", field="penalty")
    if not 1 <= self.retention_threshold <= self.particles:
      raise ConfigurationError("retention_threshold must lie in [1, particles].")


@dataclass(eq=False)
class Particle:
  position: np.ndarray
  velocity: np.ndarray
  best_position: np.ndarray
  best_fitness: float = math.inf
  fitness: float = math.inf
  active: bool = True
  index: int = 0

  def __post_init__(self) -> None:
    self.position = np.asarray(self.position, dtype=float).copy()
    self.velocity = np.asarray(self.velocity, dtype=float).copy()
    self.best_position = np.asarray(self.best_position, dtype=float).copy()

  def record(self, fitness: float) -> None:
    """Store the current fitness; the personal best only ever improves."""
    self.fitness = fitness
    if fitness < self.best_fitness:
      self.best_fitness = fitness
      self.best_position = self.position.copy()


@dataclass(eq=False)
class PowerProblem:
  """Power step inputs.

  `coefficients[k, n]` is the ζ-coordinate information that subcarrier n
  contributes to vehicle k per watt; `priors[k]` is the prior block 𝒥_kk^P.
  """

  gains: np.ndarray
  coefficients: np.ndarray
  priors: np.ndarray
  budget: float
  thresholds: Optional[QosThresholds] = None

  def __post_init__(self) -> None:
    self.gains = np.asarray(self.gains, dtype=float).reshape(-1)
    self.coefficients = np.asarray(self.coefficients, dtype=float)
    if self.coefficients.ndim != 4 or self.coefficients.shape[1:] != (self.gains.size, 3, 3):
      raise ConfigurationError("coefficients must be shaped (K, N, 3, 3).")
    if self.priors is None:
      self.priors = np.zeros((self.coefficients.shape[0], 3, 3))
    self.priors = np.asarray(self.priors, dtype=float).reshape(-1, 3, 3)
    if self.priors.shape[0] != self.coefficients.shape[0]:
      raise ConfigurationError("One prior block per vehicle is required.")
    if np.any(self.gains < 0):
      raise ConfigurationError("Effective gains cannot be negative.")
    if not self.budget > 0:
      raise ConfigurationError("The power budget must be positive.", field="budget")

  @property
  def num_subcarriers(self) -> int:
    return int(self.gains.size)

  @property
  def num_vehicles(self) -> int:
    return int(self.coefficients.shape[0])

  def information(self, powers: np.ndarray) -> np.ndarray:
    """(K, 3, 3) observed-plus-prior information at the given powers."""
    observed = np.einsum("n,knij->kij", np.asarray(powers, dtype=float), self.coefficients)
    return observed + self.priors


@dataclass(eq=False)
class PsiMatrices:
  """Per-vehicle 2×2 LMI matrices whose PSD-ness encodes the d and ν thresholds."""

  distance: np.ndarray
  speed: np.ndarray

  def min_eigenvalues(self) -> np.ndarray:
    """(K, 2) smallest eigenvalue of Ψ^d and Ψ^ν per vehicle."""
    return np.stack([
      np.linalg.eigvalsh(self.distance)[:, 0],
      np.linalg.eigvalsh(self.speed)[:, 0],
    ], axis=1)


@dataclass(eq=False)
class PowerSolution:
  powers: np.ndarray
  status: str
  multiplier: float = 0.0
  kkt_residual: float = 0.0
  objective: float = 0.0


@dataclass(eq=False)
class SdpSolution:
  """Relaxed covariances W_n, the recovered unit-modulus beams and solver diagnostics."""

  covariances: np.ndarray
  beams: np.ndarray
  kappa: np.ndarray
  epsilon_distance: np.ndarray
  epsilon_speed: np.ndarray
  objective: float
  surrogate_trace: List[float] = field(default_factory=list)
  true_trace: List[float] = field(default_factory=list)
  iterations: int = 0
  status: str = "optimal"


@dataclass(eq=False)
class PgaResult:
  positions: np.ndarray
  objective_trace: List[float]
  iterations: int
  accepted_steps: int = 0


@dataclass(eq=False)
class SwarmResult:
  position: np.ndarray
  fitness: float
  fitness_trace: List[float]
  evaluations: int
  sum_rate: float
  beams: Optional[BeamformerSet] = None


@dataclass(eq=False)
class AoResult:
  """Outcome of the alternating weighted-sum loop."""

  layout: ArrayLayout
  beams: BeamformerSet
  objective_trace: List[float]
  iterations: int
  converged: bool
  aleph: np.ndarray
  rejected_steps: int = 0

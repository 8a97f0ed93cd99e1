"""Scenario definition and per-slot records consumed by the orchestrator and exporters."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from app.core.errors import ConfigurationError
from app.schemas.core import (
  ArrayLayout,
  BeamformerSet,
  SystemConfig,
  VehicleState,
  contiguous_partition,
  vehicles_to_array,
)
from app.schemas.optimization import (
  AlephPolicy,
  Movement,
  ObjectiveMode,
  PgaConfig,
  QosThresholds,
  SolverSettings,
  SwarmConfig,
)
from app.schemas.tracking import MotionModel, TrackingConfig


@dataclass(frozen=True)
class ObjectiveConfig:
  mode: ObjectiveMode = ObjectiveMode.WEIGHTED
  rho: float = 0.5
  aleph_policy: AlephPolicy = AlephPolicy.UNIT
  aleph: Optional[tuple] = None
  thresholds: Optional[QosThresholds] = None

  def __post_init__(self) -> None:
    if not 0.0 <= self.rho <= 1.0:
      raise ConfigurationError(f"rho must lie in [0, 1], got {self.rho}.", field="rho")
    if self.mode == ObjectiveMode.QOS and self.thresholds is None:
      raise ConfigurationError("QoS mode requires thresholds.", field="thresholds")
    if self.mode == ObjectiveMode.WEIGHTED and self.thresholds is not None:
      raise ConfigurationError("Thresholds are only accepted in QoS mode.", field="thresholds")
    if self.aleph_policy == AlephPolicy.FIXED:
      if self.aleph is None or len(self.aleph) != 3 or any(value < 0 for value in self.aleph):
        raise ConfigurationError("A fixed aleph policy needs three nonnegative factors.", field="aleph")


@dataclass(eq=False)
class Scenario:
  system: SystemConfig
  layout: ArrayLayout
  vehicles: List[VehicleState]
  motion: MotionModel = field(default_factory=MotionModel)
  tracking: TrackingConfig = field(default_factory=TrackingConfig)
  objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
  solver: SolverSettings = field(default_factory=SolverSettings)
  swarm: SwarmConfig = field(default_factory=SwarmConfig)
  pga: PgaConfig = field(default_factory=PgaConfig)
  horizon: int = 1
  movement: Movement = Movement.BOTH
  assignment: Optional[np.ndarray] = None
  seed: int = 0
  config_hash: str = ""

  def __post_init__(self) -> None:
    if self.horizon < 1:
      raise ConfigurationError("horizon must be at least 1 slot.", field="horizon")
    if not self.vehicles:
      raise ConfigurationError("At least one vehicle is required.", field="vehicles")
    if self.assignment is None:
      self.assignment = contiguous_partition(self.system.num_subcarriers, len(self.vehicles))
    self.assignment = np.asarray(self.assignment, dtype=int).reshape(-1)
    if self.assignment.size != self.system.num_subcarriers:
      raise ConfigurationError("The subcarrier map needs one vehicle index per subcarrier.")
    if np.any(self.assignment < 0) or np.any(self.assignment >= len(self.vehicles)):
      raise ConfigurationError("Subcarrier map references an unknown vehicle.")
    missing = set(range(len(self.vehicles))) - set(self.assignment.tolist())
    if missing:
      raise ConfigurationError(f"Vehicles {sorted(missing)} have no subcarrier.")

  @property
  def num_vehicles(self) -> int:
    return len(self.vehicles)

  def true_states(self) -> np.ndarray:
    return vehicles_to_array(self.vehicles)


@dataclass(eq=False)
class SlotRecord:
  """Metrics of one tracking slot; bound arrays are (K, 3) in SI units."""

  slot: int
  true_state: np.ndarray
  predicted_state: np.ndarray
  tracked_state: np.ndarray
  tx_positions: np.ndarray
  rx_positions: np.ndarray
  sum_rate: float
  predicted_sum_rate: float
  lpcrlb: np.ndarray
  pcrlb: np.ndarray
  covariance_diagonal: np.ndarray
  objective: float
  feasible: bool
  sca_iterations: int = 0
  swarm_evaluations: int = 0
  seeds: Dict[str, Any] = field(default_factory=dict)
  runtime_ms: float = 0.0

  def __post_init__(self) -> None:
    if self.sum_rate < 0:
      raise ConfigurationError("sum_rate cannot be negative.")

  @property
  def num_vehicles(self) -> int:
    return int(np.asarray(self.true_state).reshape(-1, 3).shape[0])

  def bounds_ordered(self, tolerance: float = 1e-9) -> bool:
    """LPCRLB ≤ PCRLB componentwise."""
    lower = np.asarray(self.lpcrlb, dtype=float)
    upper = np.asarray(self.pcrlb, dtype=float)
    return bool(np.all(lower <= upper * (1 + tolerance)))


@dataclass(eq=False)
class SweepPoint:
  rho: float
  sum_rate: float
  sensing_metric: float
  pcrlb_metric: float
  lpcrlb: np.ndarray
  pcrlb: np.ndarray
  objective: float
  iterations: int
  source_rho: Optional[float] = None


@dataclass(frozen=True)
class ProgressEvent:
  """What a run reports after a slot, a sweep point or a finished alternating loop.

  `margin` is the relative excess of the tightest QoS constraint (0.2 means
  the bound sits at 1.2x its threshold); it is only set for infeasible slots.
  """

  message: str
  slot: Optional[int] = None
  objective: Optional[float] = None
  sum_rate: Optional[float] = None
  feasible: Optional[bool] = None
  constraint: Optional[str] = None
  margin: Optional[float] = None


@dataclass(eq=False)
class SlotInputs:
  """Channel knowledge one optimisation round works with."""

  vehicles: List[VehicleState]
  priors: Optional[np.ndarray] = None
  layout: Optional[ArrayLayout] = None
  beams: Optional[BeamformerSet] = None

"""JSON run-configuration file: every physical field carries its unit in the name."""
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.optimization import AlephPolicy, Movement, ObjectiveMode


class ConfigSection(BaseModel):
  model_config = ConfigDict(extra="forbid")


class SystemSection(ConfigSection):
  carrier_frequency_hz: float = Field(default=28e9, gt=0)
  num_subcarriers: int = Field(default=32, ge=1)
  num_blocks: int = Field(default=7, ge=1)
  subcarrier_spacing_hz: float = Field(default=120e3, gt=0)
  symbol_duration_s: float = Field(default=8.92e-6, gt=0)
  useful_duration_s: Optional[float] = Field(
    default=None,
    gt=0,
    description="Optional; when given it must equal 1/subcarrier_spacing_hz."
  )
  comm_noise_psd_w_per_hz: float = Field(default=1e-23, gt=0)
  radar_noise_psd_w_per_hz: float = Field(default=1.1e-25, gt=0)
  total_power_w: float = Field(default=1.0, gt=0)
  radar_cross_section_m2: float = Field(default=0.1, gt=0)
  ref_path_loss_db: float = -70.0
  ref_distance_m: float = Field(default=1.0, gt=0)
  path_loss_exponent: float = Field(default=2.55, ge=0)
  subcarrier_map: Optional[List[int]] = Field(
    default=None,
    description="Vehicle index per subcarrier; contiguous equal groups when omitted."
  )


class ArraySection(ConfigSection):
  num_tx: int = Field(default=8, ge=1)
  num_rx: int = Field(default=8, ge=1)
  region_length_lambda: float = Field(default=9.0, gt=0)
  min_spacing_lambda: float = Field(default=0.5, gt=0)
  tx_rx_gap_lambda: float = Field(default=0.5, ge=0)
  tx_positions_m: Optional[List[float]] = None
  rx_positions_m: Optional[List[float]] = None
  movement: Movement = Movement.BOTH


class VehicleEntry(ConfigSection):
  theta_deg: float = Field(gt=0, lt=180)
  distance_m: float = Field(gt=0)
  speed_mps: float


def _default_vehicles() -> List[VehicleEntry]:
  return [
    VehicleEntry(theta_deg=9.2, distance_m=400.0, speed_mps=20.0),
    VehicleEntry(theta_deg=12.0, distance_m=410.0, speed_mps=18.0),
  ]


class MotionSection(ConfigSection):
  slot_duration_s: float = Field(default=0.02, gt=0)
  sigma_theta_rad: float = Field(default=1e-4, ge=0)
  sigma_distance_m: float = Field(default=0.05, ge=0)
  sigma_speed_mps: float = Field(default=0.1, ge=0)
  speed_increment_min_mps: float = -0.2
  speed_increment_max_mps: float = 0.2


class TrackingSection(ConfigSection):
  init_sigma_theta_rad: float = Field(default=1e-3, ge=0)
  init_sigma_distance_m: float = Field(default=0.5, ge=0)
  init_sigma_speed_mps: float = Field(default=0.5, ge=0)
  echo_noise: bool = True


class ThresholdSection(ConfigSection):
  """Maximum admissible LPCRLBs; null disables a constraint."""

  theta_rad2: Optional[float] = Field(default=2e-4, gt=0)
  distance_m2: Optional[float] = Field(default=0.05, gt=0)
  speed_m2ps2: Optional[float] = Field(default=1.0, gt=0)


class ObjectiveSection(ConfigSection):
  mode: ObjectiveMode = ObjectiveMode.WEIGHTED
  rho: float = Field(default=0.5, ge=0, le=1)
  aleph_policy: AlephPolicy = AlephPolicy.UNIT
  aleph: Optional[List[float]] = None
  thresholds: Optional[ThresholdSection] = None

  @model_validator(mode="after")
  def _thresholds_follow_mode(self) -> "ObjectiveSection":
    if self.mode == ObjectiveMode.QOS and self.thresholds is None:
      self.thresholds = ThresholdSection()
    return self


class SolverSection(ConfigSection):
  backend: str = "CLARABEL"
  tolerance: float = Field(default=1e-6, gt=0)
  max_sca_iterations: int = Field(default=20, ge=1)
  sca_tolerance: float = Field(default=1e-4, gt=0)
  randomization_samples: int = Field(default=100, ge=0)
  rank_penalty: float = Field(default=0.1, ge=0)
  max_outer_iterations: int = Field(default=100, ge=1)
  outer_tolerance: float = Field(default=1e-4, gt=0)
  qos_slack: float = Field(default=0.05, ge=0)
  tightening_rounds: int = Field(default=3, ge=0)
  tightening_factor: float = Field(default=0.9, gt=0, lt=1)


class SwarmSection(ConfigSection):
  particles: int = Field(default=10, ge=2)
  iterations: int = Field(default=20, ge=0)
  inertia_min: float = 0.4
  inertia_max: float = 0.9
  cognitive: float = 1.5
  social: float = 1.5
  velocity_scale: float = Field(default=0.2, gt=0)
  reflection_scale: float = Field(default=0.5, ge=0, le=1)
  prune_scale: float = Field(default=0.5, gt=0)
  penalty: float = Field(default=50.0, gt=0)
  retention_threshold: int = Field(default=6, ge=1)
  warm_start: bool = False


class PgaSection(ConfigSection):
  tx_step_lambda: float = Field(default=0.1, gt=0)
  rx_step_lambda: float = Field(default=0.1, gt=0)
  armijo_factor: float = Field(default=0.5, gt=0, lt=1)
  max_backtracks: int = Field(default=30, ge=0)
  max_iterations: int = Field(default=100, ge=0)
  tolerance: float = Field(default=1e-6, gt=0)
  literal_anchor: bool = False
  exact_projection: bool = False


class RunSection(ConfigSection):
  horizon_slots: int = Field(default=1, ge=1)
  seed: int = Field(default=0, ge=0)


class OutputSection(ConfigSection):
  directory: Optional[str] = None
  format: Literal["csv", "json"] = "csv"


class RunConfigFile(ConfigSection):
  system: SystemSection = Field(default_factory=SystemSection)
  array: ArraySection = Field(default_factory=ArraySection)
  vehicles: List[VehicleEntry] = Field(default_factory=_default_vehicles, min_length=1)
  motion: MotionSection = Field(default_factory=MotionSection)
  tracking: TrackingSection = Field(default_factory=TrackingSection)
  objective: ObjectiveSection = Field(default_factory=ObjectiveSection)
  solver: SolverSection = Field(default_factory=SolverSection)
  swarm: SwarmSection = Field(default_factory=SwarmSection)
  pga: PgaSection = Field(default_factory=PgaSection)
  run: RunSection = Field(default_factory=RunSection)
  output: OutputSection = Field(default_factory=OutputSection)

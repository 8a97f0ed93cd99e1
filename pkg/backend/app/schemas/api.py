from datetime import datetime
from typing import List, Optional

from pydantic import BaseModel, Field

from app.schemas.run_config import RunConfigFile


class BoundsRequest(BaseModel):
  config: RunConfigFile = Field(default_factory=RunConfigFile)


class VehicleBounds(BaseModel):
  """Bounds in rad², m² and (m/s)²; null marks an unbounded parameter."""

  vehicle: int
  theta_deg: float
  distance_m: float
  speed_mps: float
  lcrlb_theta: Optional[float] = None
  lcrlb_d: Optional[float] = None
  lcrlb_nu: Optional[float] = None
  lpcrlb_theta: Optional[float] = None
  lpcrlb_d: Optional[float] = None
  lpcrlb_nu: Optional[float] = None


class BoundsResponse(BaseModel):
  config_hash: str
  vehicles: List[VehicleBounds]


class OptimizeWeightedRequest(BaseModel):
  config: RunConfigFile = Field(default_factory=RunConfigFile)
  rho: Optional[float] = Field(default=None, ge=0, le=1)
  seed: Optional[int] = Field(default=None, ge=0)
  dmax_lambda: Optional[float] = Field(default=None, gt=0)


class OptimizeWeightedResponse(BaseModel):
  run_id: Optional[int] = None
  config_hash: str
  sum_rate_bits: float
  objective: float
  iterations: int
  converged: bool
  rejected_steps: int
  objective_trace: List[float]
  tx_positions_m: List[float]
  rx_positions_m: List[float]
  aleph: List[float]


class RunRecordRead(BaseModel):
  id: int
  command: str
  status: str
  seed: int
  config_hash: str
  sum_rate: Optional[float] = None
  objective: Optional[float] = None
  iterations: Optional[int] = None
  output_path: Optional[str] = None
  message: Optional[str] = None
  created_at: datetime

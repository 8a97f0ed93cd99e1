"""Schema exports for FastAPI."""

from app.schemas.api import (
  BoundsRequest,
  BoundsResponse,
  OptimizeWeightedRequest,
  OptimizeWeightedResponse,
  RunRecordRead,
  VehicleBounds,
)
from app.schemas.notifications import RunStatusPayload
from app.schemas.run_config import RunConfigFile

__all__ = [
  "BoundsRequest",
  "BoundsResponse",
  "OptimizeWeightedRequest",
  "OptimizeWeightedResponse",
  "RunRecordRead",
  "VehicleBounds",
  "RunStatusPayload",
  "RunConfigFile",
]

"""Sensing bounds of a configured scenario."""
from __future__ import annotations

import math

from fastapi import APIRouter

from app.api.errors import as_http_error
from app.core.errors import IsacError
from app.schemas.api import BoundsRequest, BoundsResponse, VehicleBounds
from app.services.config_loader import build_scenario, check_units
from app.services.run_service import scenario_bounds

router = APIRouter()

BOUND_COLUMNS = ("lcrlb_theta", "lcrlb_d", "lcrlb_nu", "lpcrlb_theta", "lpcrlb_d", "lpcrlb_nu")


def _finite(value: float):
  return float(value) if math.isfinite(value) else None


@router.post("", response_model=BoundsResponse)
def compute_bounds(request: BoundsRequest) -> BoundsResponse:
  try:
    check_units(request.config)
    scenario = build_scenario(request.config)
    table = scenario_bounds(scenario)
  except (IsacError, ValueError) as exc:
    raise as_http_error(exc) from exc
  vehicles = [
    VehicleBounds(
      vehicle=int(row["vehicle"]),
      theta_deg=float(row["theta_deg"]),
      distance_m=float(row["distance_m"]),
      speed_mps=float(row["speed_mps"]),
      **{column: _finite(float(row[column])) for column in BOUND_COLUMNS}
    )
    for row in table.to_dict(orient="records")
  ]
  return BoundsResponse(config_hash=scenario.config_hash, vehicles=vehicles)

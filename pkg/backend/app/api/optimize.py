"""Weighted-sum optimisation runs."""
from __future__ import annotations

from fastapi import APIRouter

from app.api.errors import as_http_error
from app.core.errors import IsacError
from app.schemas.api import OptimizeWeightedRequest, OptimizeWeightedResponse
from app.services import channel_model
from app.services.config_loader import apply_overrides, build_scenario
from app.services.notification_service import run_monitor
from app.services.orchestrator import run_p1_ao
from app.services.run_store import record_run

router = APIRouter()


@router.post("/weighted", response_model=OptimizeWeightedResponse)
def optimize_weighted(request: OptimizeWeightedRequest) -> OptimizeWeightedResponse:
  entry_id = None
  try:
    config = apply_overrides(request.config, seed=request.seed, rho=request.rho, dmax_lambda=request.dmax_lambda)
    scenario = build_scenario(config)
    entry_id = run_monitor.start(command="optimize-weighted")
    result = run_p1_ao(scenario, progress=run_monitor.reporter(entry_id))
  except (IsacError, ValueError) as exc:
    if entry_id is not None:
      run_monitor.fail(entry_id, exc)
    raise as_http_error(exc) from exc

  rate = channel_model.sum_rate(scenario.system, result.layout, result.beams, scenario.vehicles)
  run_monitor.complete(entry_id)
  ledger = record_run(
    "optimize-weighted",
    seed=scenario.seed,
    config_hash=scenario.config_hash,
    sum_rate=rate,
    objective=result.objective_trace[-1],
    iterations=result.iterations,
  )
  return OptimizeWeightedResponse(
    run_id=ledger.id,
    config_hash=scenario.config_hash,
    sum_rate_bits=rate,
    objective=result.objective_trace[-1],
    iterations=result.iterations,
    converged=result.converged,
    rejected_steps=result.rejected_steps,
    objective_trace=[float(value) for value in result.objective_trace],
    tx_positions_m=result.layout.tx_positions.tolist(),
    rx_positions_m=result.layout.rx_positions.tolist(),
    aleph=[float(value) for value in result.aleph],
  )

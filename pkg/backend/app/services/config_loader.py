"""Run-configuration parsing: JSON text → validated RunConfigFile → Scenario.

Degrees and dB live only in the file; everything past `build_scenario` is
radians and linear units.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from app.core.errors import ConfigurationError
from app.schemas.core import ArrayLayout, SystemConfig, VehicleState
from app.schemas.optimization import PgaConfig, QosThresholds, SolverSettings, SwarmConfig
from app.schemas.run_config import RunConfigFile
from app.schemas.scenario import ObjectiveConfig, Scenario
from app.schemas.tracking import MotionModel, TrackingConfig

logger = logging.getLogger(__name__)

UNIT_CHECK_TOLERANCE = 1e-9

# Assumed values with no reference setting behind them, echoed in every provenance block.
ASSUMED_DEFAULTS: Dict[str, str] = {
  "motion.slot_duration_s": "slot duration not given; 20 ms assumed",
  "motion.sigma_theta_rad": "process noise not given",
  "motion.sigma_distance_m": "process noise not given",
  "motion.sigma_speed_mps": "process noise not given",
  "motion.speed_increment_min_mps": "speed increment range not given",
  "motion.speed_increment_max_mps": "speed increment range not given",
  "tracking.init_sigma_theta_rad": "initial estimate replaces a dedicated acquisition stage",
  "tracking.init_sigma_distance_m": "initial estimate replaces a dedicated acquisition stage",
  "tracking.init_sigma_speed_mps": "initial estimate replaces a dedicated acquisition stage",
  "solver.rank_penalty": "rank-one promotion weight",
  "solver.randomization_samples": "Gaussian randomisation budget",
  "solver.qos_slack": "tolerance on recovered beams",
  "solver.tightening_rounds": "threshold tightening schedule",
  "solver.tightening_factor": "threshold tightening schedule",
  "swarm.inertia_min": "inertia schedule",
  "swarm.inertia_max": "inertia schedule",
  "swarm.cognitive": "acceleration coefficients",
  "swarm.social": "acceleration coefficients",
  "swarm.velocity_scale": "velocity clamp",
  "swarm.reflection_scale": "reflection attenuation",
  "swarm.prune_scale": "pruning radius",
  "swarm.penalty": "spacing penalty weight",
  "swarm.retention_threshold": "minimum active particles",
  "pga.tx_step_lambda": "initial ascent step",
  "pga.rx_step_lambda": "initial ascent step",
  "pga.armijo_factor": "backtracking factor",
}


def _format_validation(error: ValidationError) -> str:
  lines = []
  for item in error.errors():
    location = ".".join(str(part) for part in item["loc"]) or "<root>"
    lines.append(f"{location}: {item['msg']}")
  return "; ".join(lines)


def load_config_text(text: str, source: str = "<config>") -> RunConfigFile:
  """Validate JSON text; an empty document yields the defaults."""
  if not text.strip():
    payload: Any = {}
  else:
    try:
      payload = json.loads(text)
    except json.JSONDecodeError as exc:
      raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
  if not isinstance(payload, dict):
    raise ConfigurationError(f"{source}: the top level must be a JSON object.")
  try:
    config = RunConfigFile.model_validate(payload)
  except ValidationError as exc:
    raise ConfigurationError(f"{source}: {_format_validation(exc)}") from exc
  check_units(config)
  return config


def load_config(path: Union[str, Path, None]) -> RunConfigFile:
  if path is None:
    return load_config_text("")
  path = Path(path)
  if not path.is_file():
    raise ConfigurationError(f"Config file {path} does not exist.", field="config")
  return load_config_text(path.read_text(encoding="utf-8"), str(path))


def check_units(config: RunConfigFile) -> None:
  """Δf = 1/T_e and T_s > T_e."""
  system = config.system
  useful = 1.0 / system.subcarrier_spacing_hz
  if system.useful_duration_s is not None:
    if abs(system.useful_duration_s - useful) > UNIT_CHECK_TOLERANCE * useful:
      raise ConfigurationError(
        f"Unit check failed: useful_duration_s={system.useful_duration_s:.9g} s but "
        f"1/subcarrier_spacing_hz={useful:.9g} s.",
        field="system.useful_duration_s"
      )
  if system.symbol_duration_s <= useful:
    raise ConfigurationError(
      f"Unit check failed: symbol_duration_s={system.symbol_duration_s:.9g} s does not exceed "
      f"the useful duration {useful:.9g} s.",
      field="system.symbol_duration_s"
    )


def _threshold(value: Optional[float]) -> float:
  return math.inf if value is None else float(value)


def build_scenario(config: RunConfigFile, config_hash_value: Optional[str] = None) -> Scenario:
  section = config.system
  system = SystemConfig(
    carrier_frequency=section.carrier_frequency_hz,
    num_subcarriers=section.num_subcarriers,
    num_blocks=section.num_blocks,
    subcarrier_spacing=section.subcarrier_spacing_hz,
    symbol_duration=section.symbol_duration_s,
    comm_noise_psd=section.comm_noise_psd_w_per_hz,
    radar_noise_psd=section.radar_noise_psd_w_per_hz,
    total_power=section.total_power_w,
    radar_cross_section=section.radar_cross_section_m2,
    ref_path_loss=10 ** (section.ref_path_loss_db / 10),
    ref_distance=section.ref_distance_m,
    path_loss_exponent=section.path_loss_exponent,
  )

  wavelength = system.wavelength
  array = config.array
  layout = ArrayLayout.half_wavelength(
    wavelength,
    array.num_tx,
    array.num_rx,
    array.region_length_lambda * wavelength,
    min_spacing=array.min_spacing_lambda * wavelength,
    tx_rx_gap=array.tx_rx_gap_lambda * wavelength,
  )
  if array.tx_positions_m is not None:
    layout = layout.with_tx(array.tx_positions_m)
  if array.rx_positions_m is not None:
    layout = layout.with_rx(array.rx_positions_m)

  objective = config.objective
  thresholds = None
  if objective.thresholds is not None:
    thresholds = QosThresholds(
      _threshold(objective.thresholds.theta_rad2),
      _threshold(objective.thresholds.distance_m2),
      _threshold(objective.thresholds.speed_m2ps2),
    )
  motion, tracking = config.motion, config.tracking
  seed = config.run.seed
  return Scenario(
    system=system,
    layout=layout,
    vehicles=[VehicleState.from_degrees(item.theta_deg, item.distance_m, item.speed_mps) for item in config.vehicles],
    motion=MotionModel(
      slot_duration=motion.slot_duration_s,
      sigma_theta=motion.sigma_theta_rad,
      sigma_distance=motion.sigma_distance_m,
      sigma_speed=motion.sigma_speed_mps,
      speed_increment_min=motion.speed_increment_min_mps,
      speed_increment_max=motion.speed_increment_max_mps,
    ),
    tracking=TrackingConfig(
      init_sigma_theta=tracking.init_sigma_theta_rad,
      init_sigma_distance=tracking.init_sigma_distance_m,
      init_sigma_speed=tracking.init_sigma_speed_mps,
      echo_noise=tracking.echo_noise,
    ),
    objective=ObjectiveConfig(
      mode=objective.mode,
      rho=objective.rho,
      aleph_policy=objective.aleph_policy,
      aleph=tuple(objective.aleph) if objective.aleph is not None else None,
      thresholds=thresholds,
    ),
    solver=SolverSettings(**config.solver.model_dump(), seed=seed),
    swarm=SwarmConfig(**config.swarm.model_dump(), seed=seed),
    pga=PgaConfig(**config.pga.model_dump()),
    horizon=config.run.horizon_slots,
    movement=array.movement,
    assignment=section.subcarrier_map,
    seed=seed,
    config_hash=config_hash_value or config_hash(config),
  )


def parse_config(path: Union[str, Path, None]) -> Scenario:
  config = load_config(path)
  scenario = build_scenario(config)
  logger.info("Loaded run configuration %s (hash %s)", path or "<defaults>", scenario.config_hash)
  return scenario


def serialize_config(config: RunConfigFile) -> str:
  """Canonical JSON: sorted keys, every field present, floats round-trip exactly."""
  return json.dumps(config.model_dump(mode="json"), sort_keys=True, indent=2)


def config_hash(config: RunConfigFile) -> str:
  return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()[:16]


def _explicit_paths(model: Any, prefix: str = "") -> List[str]:
  paths = []
  for name in getattr(model, "model_fields_set", set()):
    path = f"{prefix}{name}"
    paths.append(path)
    paths.extend(_explicit_paths(getattr(model, name), f"{path}."))
  return paths


def provenance(config: RunConfigFile) -> Dict[str, Any]:
  """Assumed defaults still in effect, i.e. not set explicitly in the file."""
  explicit = set(_explicit_paths(config))
  return {
    "assumed_defaults": {
      path: reason for path, reason in ASSUMED_DEFAULTS.items() if path not in explicit
    },
    "config_hash": config_hash(config),
  }


def apply_overrides(
  config: RunConfigFile,
  *,
  seed: Optional[int] = None,
  rho: Optional[float] = None,
  dmax_lambda: Optional[float] = None,
  slots: Optional[int] = None,
) -> RunConfigFile:
  """Command-line flags take precedence over the file; the result is re-validated."""
  payload = config.model_dump(mode="json", exclude_unset=True)
  for section, key, value in (
    ("run", "seed", seed),
    ("objective", "rho", rho),
    ("array", "region_length_lambda", dmax_lambda),
    ("run", "horizon_slots", slots),
  ):
    if value is not None:
      payload.setdefault(section, {})[key] = value
  try:
    updated = RunConfigFile.model_validate(payload)
  except ValidationError as exc:
    raise ConfigurationError(f"<command line>: {_format_validation(exc)}") from exc
  check_units(updated)
  return updated

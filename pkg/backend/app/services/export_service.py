"""Result bundles: per-slot CSV/JSON, run metadata and two-column plot data.

Floats are written with 17 significant digits so every number re-parses to
the value held in memory.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from app.schemas.optimization import AoResult
from app.schemas.scenario import Scenario, SlotRecord

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
PARAMETERS = ("theta", "d", "nu")


@dataclass(eq=False)
class PlotSeries:
  x: Sequence[float]
  y: Sequence[float]
  header: Tuple[str, str] = ("x", "y")


def slot_columns(num_vehicles: int) -> List[str]:
  """Column order of the per-slot table; fixed for a given number of vehicles."""
  columns = ["slot", "sum_rate_bits", "predicted_sum_rate_bits"]
  for bound in ("lpcrlb", "pcrlb"):
    for name in PARAMETERS:
      columns.extend(f"{bound}_{name}_{k}" for k in range(num_vehicles))
  for state in ("true", "predicted", "est"):
    for k in range(num_vehicles):
      columns.extend(f"{state}_{name}_{k}" for name in PARAMETERS)
  columns += ["feasible", "sca_iterations", "swarm_evaluations", "runtime_ms"]
  return columns


def slot_frame(records: Sequence[SlotRecord]) -> pd.DataFrame:
  if not records:
    return pd.DataFrame(columns=slot_columns(0))
  count = records[0].num_vehicles
  rows = []
  for record in records:
    row: Dict[str, Any] = {
      "slot": record.slot,
      "sum_rate_bits": record.sum_rate,
      "predicted_sum_rate_bits": record.predicted_sum_rate,
    }
    for bound, values in (("lpcrlb", record.lpcrlb), ("pcrlb", record.pcrlb)):
      values = np.asarray(values, dtype=float).reshape(count, 3)
      for index, name in enumerate(PARAMETERS):
        for k in range(count):
          row[f"{bound}_{name}_{k}"] = values[k, index]
    for state, values in (
      ("true", record.true_state),
      ("predicted", record.predicted_state),
      ("est", record.tracked_state),
    ):
      values = np.asarray(values, dtype=float).reshape(count, 3)
      for k in range(count):
        for index, name in enumerate(PARAMETERS):
          row[f"{state}_{name}_{k}"] = values[k, index]
    row["feasible"] = record.feasible
    row["sca_iterations"] = record.sca_iterations
    row["swarm_evaluations"] = record.swarm_evaluations
    row["runtime_ms"] = record.runtime_ms
    rows.append(row)
  return pd.DataFrame(rows, columns=slot_columns(count))


def trace_frame(result: AoResult) -> pd.DataFrame:
  return pd.DataFrame({
    "iteration": np.arange(len(result.objective_trace)),
    "objective": result.objective_trace,
  })


def jsonable(value: Any) -> Any:
  """Plain JSON types; non-finite floats become null."""
  if is_dataclass(value) and not isinstance(value, type):
    return jsonable(asdict(value))
  if isinstance(value, Mapping):
    return {str(key): jsonable(item) for key, item in value.items()}
  if isinstance(value, np.ndarray):
    return jsonable(value.tolist())
  if isinstance(value, (list, tuple)):
    return [jsonable(item) for item in value]
  if isinstance(value, (np.bool_, bool)):
    return bool(value)
  if isinstance(value, (np.integer, int)):
    return int(value)
  if isinstance(value, (np.floating, float)):
    value = float(value)
    return value if math.isfinite(value) else None
  if hasattr(value, "value") and isinstance(getattr(value, "value"), str):
    return value.value
  return value


def run_metadata(scenario: Scenario, command: str, **extra: Any) -> Dict[str, Any]:
  """Seed, config hash, tolerances and whatever the command adds (ℵ, iteration counts...)."""
  solver = scenario.solver
  metadata = {
    "command": command,
    "seed": scenario.seed,
    "config_hash": scenario.config_hash,
    "num_vehicles": scenario.num_vehicles,
    "solver": {
      "backend": solver.backend,
      "tolerance": solver.tolerance,
      "sca_tolerance": solver.sca_tolerance,
      "outer_tolerance": solver.outer_tolerance,
      "max_outer_iterations": solver.max_outer_iterations,
      "rank_penalty": solver.rank_penalty,
      "randomization_samples": solver.randomization_samples,
    },
  }
  metadata.update(extra)
  return jsonable(metadata)


def write_json(path: Path, payload: Any) -> Path:
  path.parent.mkdir(parents=True, exist_ok=True)
  path.write_text(json.dumps(jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
  return path


def write_table(path: Path, frame: pd.DataFrame, fmt: str = "csv") -> Path:
  """CSV with 17 significant digits, or a JSON list of row objects."""
  path.parent.mkdir(parents=True, exist_ok=True)
  if fmt == "json":
    return write_json(path.with_suffix(".json"), frame.to_dict(orient="records"))
  frame.to_csv(path.with_suffix(".csv"), index=False, float_format=FLOAT_FORMAT)
  return path.with_suffix(".csv")


def write_plot_data(path: Path, x: Iterable[float], y: Iterable[float], header: Sequence[str] = ("x", "y")) -> Path:
  """Two whitespace-separated columns with a commented header line."""
  path.parent.mkdir(parents=True, exist_ok=True)
  frame = pd.DataFrame({header[0]: list(x), header[1]: list(y)})
  with path.open("w", encoding="utf-8") as handle:
    handle.write(f"# {header[0]} {header[1]}\n")
    frame.to_csv(handle, sep=" ", header=False, index=False, float_format=FLOAT_FORMAT)
  return path


# ----------------------------------------------------------------------
# Result bundles
@dataclass(eq=False)
class ResultBundle:
  """Everything one command produces: named tables, plot series and metadata."""

  command: str
  tables: Dict[str, pd.DataFrame]
  metadata: Dict[str, Any]
  plots: Dict[str, PlotSeries] = field(default_factory=dict)
  sum_rate: Optional[float] = None
  objective: Optional[float] = None
  iterations: Optional[int] = None
  infeasible: bool = False


def write_bundle(bundle: ResultBundle, out_dir: Path, fmt: str = "csv") -> List[Path]:
  out_dir = Path(out_dir)
  paths = [write_table(out_dir / name, frame, fmt) for name, frame in bundle.tables.items()]
  for name, series in bundle.plots.items():
    paths.append(write_plot_data(out_dir / "plots" / f"{name}.dat", series.x, series.y, series.header))
  paths.append(write_json(out_dir / f"{bundle.command}_metadata.json", bundle.metadata))
  logger.info("Wrote %d files for %s to %s", len(paths), bundle.command, out_dir)
  return paths

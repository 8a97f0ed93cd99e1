"""In-process registry of running optimisations, fed by the orchestrator's progress events."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from threading import Lock
from typing import Any, Callable, Dict, List, Optional
from uuid import uuid4

from app.core.errors import InfeasibleProblemError
from app.schemas.scenario import ProgressEvent

logger = logging.getLogger(__name__)


@dataclass
class RunStatus:
  id: str
  command: str
  status: str = "running"
  message: str = ""
  completed_steps: int = 0
  total_steps: Optional[int] = None
  last_slot: Optional[int] = None
  objective: Optional[float] = None
  sum_rate: Optional[float] = None
  infeasible_slots: List[int] = field(default_factory=list)
  constraint: Optional[str] = None
  margin: Optional[float] = None
  started_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))
  updated_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

  def to_dict(self) -> Dict[str, Any]:
    return asdict(self)


class RunMonitor:
  """Thread-safe, bounded registry; the newest `MAX_ITEMS` runs are kept."""

  MAX_ITEMS = 50

  def __init__(self) -> None:
    self._lock = Lock()
    self._items: Dict[str, RunStatus] = {}

  def start(self, *, command: str, total_steps: Optional[int] = None) -> str:
    entry = RunStatus(id=str(uuid4()), command=command, total_steps=total_steps)
    with self._lock:
      self._items[entry.id] = entry
      self._trim()
    return entry.id

  def record(self, entry_id: str, event: ProgressEvent) -> None:
    """Fold one progress event into the run; the tightest constraint is kept from the last infeasible slot."""
    with self._lock:
      entry = self._items.get(entry_id)
      if not entry:
        return
      entry.completed_steps += 1
      entry.message = event.message
      if event.slot is not None:
        entry.last_slot = event.slot
        if event.feasible is False:
          entry.infeasible_slots.append(event.slot)
      if event.objective is not None:
        entry.objective = event.objective
      if event.sum_rate is not None:
        entry.sum_rate = event.sum_rate
      if event.constraint is not None:
        entry.constraint = event.constraint
        entry.margin = event.margin
      entry.updated_at = datetime.now(timezone.utc)

  def reporter(self, entry_id: str) -> Callable[[ProgressEvent], None]:
    return lambda event: self.record(entry_id, event)

  def complete(self, entry_id: str) -> None:
    self._close(entry_id, "completed")

  def fail(self, entry_id: str, error: Exception) -> None:
    """Mark the run failed; an InfeasibleProblemError also leaves its constraint and margin."""
    constraint = margin = None
    if isinstance(error, InfeasibleProblemError):
      constraint, margin = error.constraint, error.margin
    self._close(entry_id, "failed", message=str(error), constraint=constraint, margin=margin)
    logger.warning("Run %s failed: %s", entry_id, error)

  def list_runs(self, limit: int = 20) -> List[RunStatus]:
    with self._lock:
      items = sorted(self._items.values(), key=lambda item: item.updated_at, reverse=True)
      return items[:limit]

  def _close(
    self,
    entry_id: str,
    status: str,
    *,
    message: Optional[str] = None,
    constraint: Optional[str] = None,
    margin: Optional[float] = None
  ) -> None:
    with self._lock:
      entry = self._items.get(entry_id)
      if not entry:
        return
      entry.status = status
      if message is not None:
        entry.message = message
      if constraint is not None:
        entry.constraint = constraint
        entry.margin = margin
      entry.updated_at = datetime.now(timezone.utc)

  def _trim(self) -> None:
    if len(self._items) <= self.MAX_ITEMS:
      return
    sorted_items = sorted(self._items.values(), key=lambda item: item.updated_at, reverse=True)
    for entry in sorted_items[self.MAX_ITEMS:]:
      self._items.pop(entry.id, None)


run_monitor = RunMonitor()

"""SQLite run ledger: one summary row per CLI/API run."""
from __future__ import annotations

import logging
from typing import List, Optional

from sqlmodel import select

from app.db.init_db import init_db
from app.db.session import session_context
from app.models.run_record import RunRecord

logger = logging.getLogger(__name__)


def record_run(
  command: str,
  *,
  status: str = "completed",
  seed: int = 0,
  config_hash: str = "",
  sum_rate: Optional[float] = None,
  objective: Optional[float] = None,
  iterations: Optional[int] = None,
  output_path: Optional[str] = None,
  message: Optional[str] = None
) -> RunRecord:
  init_db()
  entry = RunRecord(
    command=command,
    status=status,
    seed=seed,
    config_hash=config_hash,
    sum_rate=sum_rate,
    objective=objective,
    iterations=iterations,
    output_path=output_path,
    message=message,
  )
  with session_context() as session:
    session.add(entry)
    session.flush()
    session.refresh(entry)
    session.expunge(entry)
  logger.debug("Ledger row %s stored for %s", entry.id, command)
  return entry


def list_runs(limit: int = 20, command: Optional[str] = None) -> List[RunRecord]:
  init_db()
  with session_context() as session:
    statement = select(RunRecord)
    if command:
      statement = statement.where(RunRecord.command == command)
    statement = statement.order_by(RunRecord.id.desc()).limit(limit)
    rows = list(session.exec(statement).all())
    for row in rows:
      session.expunge(row)
  return rows

from __future__ import annotations

from datetime import datetime
from typing import Optional

from sqlmodel import Column, Field, SQLModel, Text


class RunRecord(SQLModel, table=True):
  """One row of the run ledger, written after every CLI or API run."""

  id: Optional[int] = Field(default=None, primary_key=True)
  command: str = Field(max_length=32, index=True)
  status: str = Field(default="completed", max_length=16)
  seed: int = Field(default=0)
  config_hash: str = Field(default="", max_length=16, index=True)
  sum_rate: Optional[float] = None
  objective: Optional[float] = None
  iterations: Optional[int] = None
  output_path: Optional[str] = Field(default=None, max_length=512)
  message: Optional[str] = Field(default=None, sa_column=Column(Text, nullable=True))
  created_at: datetime = Field(default_factory=datetime.utcnow)

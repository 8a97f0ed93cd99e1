from datetime import datetime
from typing import List, Optional

from pydantic import BaseModel, Field


class RunStatusPayload(BaseModel):
  id: str
  command: str
  status: str = Field(pattern="^(running|completed|failed)$")
  message: str
  completed_steps: int
  total_steps: Optional[int] = None
  last_slot: Optional[int] = None
  objective: Optional[float] = None
  sum_rate: Optional[float] = None
  infeasible_slots: List[int]
  constraint: Optional[str] = None
  margin: Optional[float] = None
  started_at: datetime
  updated_at: datetime

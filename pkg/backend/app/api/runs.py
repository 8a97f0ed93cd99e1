from typing import Optional

from fastapi import APIRouter, Query

from app.schemas.api import RunRecordRead
from app.services.run_store import list_runs

router = APIRouter()


@router.get("", response_model=list[RunRecordRead])
def list_ledger(
  limit: int = Query(default=20, ge=1, le=500),
  command: Optional[str] = Query(default=None)
):
  return [RunRecordRead.model_validate(row, from_attributes=True) for row in list_runs(limit, command)]

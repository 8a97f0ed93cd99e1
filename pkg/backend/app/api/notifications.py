from fastapi import APIRouter, Query

from app.schemas.notifications import RunStatusPayload
from app.services.notification_service import run_monitor

router = APIRouter()


@router.get("", response_model=list[RunStatusPayload])
def list_notifications(limit: int = Query(default=20, ge=1, le=100)):
  entries = run_monitor.list_runs(limit)
  return [RunStatusPayload(**entry.to_dict()) for entry in entries]

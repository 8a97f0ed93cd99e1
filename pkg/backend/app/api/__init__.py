from fastapi import APIRouter

from .bounds import router as bounds_router
from .notifications import router as notifications_router
from .optimize import router as optimize_router
from .runs import router as runs_router

api_router = APIRouter()
api_router.include_router(bounds_router, prefix="/bounds", tags=["bounds"])
api_router.include_router(optimize_router, prefix="/optimize", tags=["optimize"])
api_router.include_router(runs_router, prefix="/runs", tags=["runs"])
api_router.include_router(notifications_router, prefix="/notifications", tags=["notifications"])

__all__ = ["api_router"]

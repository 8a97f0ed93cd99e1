"""Translation of library failures into HTTP errors."""
from fastapi import HTTPException

from app.core.errors import InfeasibleProblemError, IsacError, SolverError


def as_http_error(exc: Exception) -> HTTPException:
  if isinstance(exc, InfeasibleProblemError):
    return HTTPException(
      status_code=409,
      detail={"message": str(exc), "constraint": exc.constraint, "margin": exc.margin}
    )
  if isinstance(exc, SolverError):
    return HTTPException(status_code=500, detail={"message": str(exc), "stage": exc.stage})
  if isinstance(exc, (ValueError, IsacError)):
    return HTTPException(status_code=400, detail=str(exc))
  return HTTPException(status_code=500, detail=str(exc))

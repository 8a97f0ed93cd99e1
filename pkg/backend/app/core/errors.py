"""Typed failures raised by the ISAC library, CLI and API layers."""
from __future__ import annotations

from typing import Optional


class IsacError(Exception):
  """Base class for every error the toolkit raises on purpose."""


class DomainError(IsacError, ValueError):
  """A physical input lies outside its domain (angle, distance, position...)."""


class ConfigurationError(IsacError, ValueError):
  """Geometry or run configuration is inconsistent."""

  def __init__(self, message: str, *, field: Optional[str] = None) -> None:
    super().__init__(message)
    self.field = field


class ConditioningError(IsacError, ArithmeticError):
  """A matrix that must be symmetric positive definite is not (or nearly not)."""

  def __init__(self, message: str, *, slot: Optional[int] = None) -> None:
    if slot is not None:
      message = f"{message} (slot {slot})"
    super().__init__(message)
    self.slot = slot


class InfeasibleBoundError(IsacError):
  """The distance/velocity information block is not positive definite."""


class InfeasibleProblemError(IsacError):
  """QoS thresholds cannot be met; names the tightest constraint."""

  def __init__(
    self,
    message: str,
    *,
    constraint: Optional[str] = None,
    margin: Optional[float] = None
  ) -> None:
    super().__init__(message)
    self.constraint = constraint
    self.margin = margin


class SolverError(IsacError):
  """The inner convex solver failed."""

  def __init__(
    self,
    message: str,
    *,
    stage: Optional[str] = None,
    status: Optional[str] = None
  ) -> None:
    if stage:
      message = f"[{stage}] {message}"
    super().__init__(message)
    self.stage = stage
    self.status = status

"""Thin wrapper around cvxpy solves with a solver fallback and typed failures."""
from __future__ import annotations

import logging
from typing import Dict, Optional

import cvxpy as cp

from app.core.config import get_settings
from app.core.errors import SolverError

logger = logging.getLogger(__name__)

FALLBACK_SOLVER = "SCS"
SOLVER_OPTIONS: Dict[str, Dict[str, float]] = {
    "CLARABEL": {"tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9, "tol_feas": 1e-9, "max_iter": 500},
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 200_000},
}
SOLVED = (cp.OPTIMAL, cp.OPTIMAL_INACCURATE)
INFEASIBLE = (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE)


def solve_problem(problem: cp.Problem, *, stage: str, backend: Optional[str] = None) -> str:
    """Solve `problem` and return its status; only solved or infeasible statuses come back."""
    primary = (backend or get_settings().solver_backend).upper()
    attempts = [primary] if primary == FALLBACK_SOLVER else [primary, FALLBACK_SOLVER]
    status = "not_run"
    for name in attempts:
        try:
            problem.solve(solver=name, **SOLVER_OPTIONS.get(name, {}))
        except cp.error.SolverError as exc:
            logger.warning("[%s] solver %s failed: %s", stage, name, exc)
            status = "solver_error"
            continue
        status = problem.status
        if status in SOLVED or status in INFEASIBLE:
            if status == cp.OPTIMAL_INACCURATE:
                logger.info("[%s] %s returned an inaccurate optimum.", stage, name)
            return status
        logger.warning("[%s] solver %s ended with status %s.", stage, name, status)
    raise SolverError(f"No solver reached an optimum (last status {status}).", stage=stage, status=status)

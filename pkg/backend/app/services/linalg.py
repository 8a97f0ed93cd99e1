"""Symmetric positive-definite helpers with a conditioning guard.

Matrices are Jacobi-scaled (unit diagonal) before the guard, so information
matrices mixing rad, m and m/s entries are judged by their correlation
structure rather than by their units.
"""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from app.core.errors import ConditioningError

RELATIVE_PIVOT = 1e-12


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix)
    return 0.5 * (matrix + matrix.conj().T)


def _scaled(matrix: np.ndarray, what: str, slot: Optional[int]) -> Tuple[np.ndarray, np.ndarray]:
    sym = symmetrize(np.asarray(matrix, dtype=float))
    diagonal = np.diag(sym)
    if not np.all(np.isfinite(sym)) or np.any(diagonal <= 0):
        raise ConditioningError(f"{what} has a non-positive or non-finite diagonal", slot=slot)
    scale = 1.0 / np.sqrt(diagonal)
    return sym * np.outer(scale, scale), scale


def check_conditioning(matrix: np.ndarray, *, what: str = "matrix", slot: Optional[int] = None) -> np.ndarray:
    """Return the ascending eigenvalues of the unit-diagonal form or raise."""
    scaled, _ = _scaled(matrix, what, slot)
    eigenvalues = linalg.eigvalsh(scaled)
    if eigenvalues[0] <= RELATIVE_PIVOT * eigenvalues[-1]:
        raise ConditioningError(
            f"{what} is singular or indefinite (relative pivot {eigenvalues[0] / eigenvalues[-1]:.3e})",
            slot=slot,
        )
    return eigenvalues


def spd_inverse(matrix: np.ndarray, *, what: str = "matrix", slot: Optional[int] = None) -> np.ndarray:
    check_conditioning(matrix, what=what, slot=slot)
    scaled, scale = _scaled(matrix, what, slot)
    factor = linalg.cho_factor(scaled, lower=True)
    inverse = linalg.cho_solve(factor, np.eye(scaled.shape[0]))
    return symmetrize(inverse * np.outer(scale, scale))


def spd_solve(matrix: np.ndarray, rhs: np.ndarray, *, what: str = "matrix", slot: Optional[int] = None) -> np.ndarray:
    check_conditioning(matrix, what=what, slot=slot)
    scaled, scale = _scaled(matrix, what, slot)
    rhs = np.asarray(rhs, dtype=float)
    weights = scale if rhs.ndim == 1 else scale[:, None]
    return weights * linalg.cho_solve(linalg.cho_factor(scaled, lower=True), weights * rhs)


def is_positive_definite(matrix: np.ndarray) -> bool:
    try:
        check_conditioning(matrix)
    except ConditioningError:
        return False
    return True

"""Dense real-matrix kernels used by every analytic formula in the package.

All state spaces here are small (tens of states), so the module wraps the
robust general-purpose routines: scaling-and-squaring with Pade approximants
for the matrix exponential and partial-pivoting LU for linear solves, with
explicit domain validation and conditioning diagnostics on top.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

COND_WARN_THRESHOLD = 1e12


class DimensionError(ValueError):
    """Operand is not square or shapes do not match."""


class DomainError(ValueError):
    """Operand contains NaN or infinite entries."""


class SingularMatrixError(ValueError):
    """Coefficient matrix is singular to working precision."""

    def __init__(self, message: str, condition: float | None = None):
        super().__init__(message)
        self.condition = condition


class IllConditionedWarning(RuntimeWarning):
    """Solve returned, but the estimated condition number exceeds 1e12."""


def _as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError(f"{name} contains non-finite entries")
    return a


def expm(a) -> np.ndarray:
    """Matrix exponential e^A of a square real matrix."""
    return scipy.linalg.expm(_as_square(a))


def linear_solve(a, b) -> np.ndarray:
    """Solve A X = B by partial-pivoting LU.

    Accepts a vector or matrix right-hand side and preserves its shape.
    Raises :class:`SingularMatrixError` (carrying a condition estimate) when
    A is singular to working precision; emits :class:`IllConditionedWarning`
    when the estimated 1-norm condition number exceeds 1e12 but the solve is
    still returned.
    """
    a = _as_square(a, "A")
    b_arr = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b_arr)):
        raise DomainError("B contains non-finite entries")
    vector_rhs = b_arr.ndim == 1
    b2 = b_arr[:, None] if vector_rhs else b_arr
    if b2.ndim != 2 or b2.shape[0] != a.shape[0]:
        raise DimensionError(
            f"rhs shape {b_arr.shape} incompatible with A of shape {a.shape}"
        )
    anorm = np.linalg.norm(a, 1)
    if anorm == 0.0:
        raise SingularMatrixError("A is the zero matrix", condition=np.inf)
    with warnings.catch_warnings():
        # scipy warns on exactly-zero pivots; we detect and raise ourselves
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    rcond, _ = scipy.linalg.lapack.dgecon(lu, anorm, norm="1")
    if np.abs(np.diag(lu)).min() == 0.0 or rcond == 0.0:
        raise SingularMatrixError(
            "matrix is singular to working precision "
            f"(condition estimate {np.inf if rcond == 0.0 else 1.0 / rcond:.3e})",
            condition=np.inf if rcond == 0.0 else 1.0 / rcond,
        )
    if 1.0 / rcond > COND_WARN_THRESHOLD:
        warnings.warn(
            f"condition estimate {1.0 / rcond:.3e} exceeds {COND_WARN_THRESHOLD:.0e}; "
            "solution may be inaccurate",
            IllConditionedWarning,
            stacklevel=2,
        )
    x = scipy.linalg.lu_solve((lu, piv), b2, check_finite=False)
    return x[:, 0] if vector_rhs else x


def inv(a) -> np.ndarray:
    """Matrix inverse, computed as n solves against the identity."""
    a = _as_square(a)
    return linear_solve(a, np.eye(a.shape[0]))

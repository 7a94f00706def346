"""Source model: validated CTMC generators and the standard constructors.

A generator holds the rate matrix Q with holding rates sigma_i = -q_ii and
nonnegative off-diagonal transition rates. Validation enforces zero row
sums, positive holding rates, and irreducibility, each as a distinct error
kind so callers can report precisely what is wrong with a user matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ROW_SUM_TOL = 1e-12


class GeneratorError(ValueError):
    """Base class for generator validation failures."""


class StateCountError(GeneratorError):
    """Fewer than two states."""


class RowSumError(GeneratorError):
    """A row of the rate matrix does not sum to zero."""


class NegativeRateError(GeneratorError):
    """An off-diagonal rate is negative."""


class ReducibleChainError(GeneratorError):
    """The directed graph of positive rates is not strongly connected."""


@dataclass(frozen=True)
class Generator:
    """Validated CTMC generator; build via :func:`validate` or a make_*.

    The raw constructor trusts its input. ``q`` is an (n, n) float array.
    """

    q: np.ndarray

    @property
    def n(self) -> int:
        return self.q.shape[0]

    @property
    def sigmas(self) -> np.ndarray:
        """Holding rates sigma_i = -q_ii."""
        return -np.diag(self.q)


@dataclass(frozen=True)
class Channel:
    """Memoryless transmission channel: service times ~ Exp(mu)."""

    mu: float

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"service rate must be positive and finite, got {self.mu}")


def validate(q) -> Generator:
    """Validate a raw rate matrix and wrap it as a :class:`Generator`.

    Raises a distinct :class:`GeneratorError` subclass per violation:
    state count, negative off-diagonal, row sum, or reducibility.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise GeneratorError(f"rate matrix must be square, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise GeneratorError("rate matrix contains non-finite entries")
    n = q.shape[0]
    if n < 2:
        raise StateCountError(f"need at least 2 states, got {n}")
    off = q.copy()
    np.fill_diagonal(off, 0.0)
    if off.min() < 0.0:
        i, j = np.unravel_index(np.argmin(off), off.shape)
        raise NegativeRateError(f"negative rate q[{i},{j}] = {q[i, j]}")
    scale = max(1.0, np.abs(q).max())
    row_sums = q.sum(axis=1)
    if np.abs(row_sums).max() > ROW_SUM_TOL * scale:
        i = int(np.argmax(np.abs(row_sums)))
        raise RowSumError(f"row {i} sums to {row_sums[i]:.3e}, expected 0")
    n_comp, _ = connected_components(
        csr_matrix(off > 0.0), directed=True, connection="strong"
    )
    if n_comp != 1:
        raise ReducibleChainError(
            f"chain is reducible ({n_comp} strongly connected components)"
        )
    return Generator(q=q)


def jump_probs(g: Generator) -> np.ndarray:
    """Embedded jump probabilities rho_ij = q_ij / sigma_i with zero diagonal."""
    rho = g.q / g.sigmas[:, None]
    np.fill_diagonal(rho, 0.0)
    return rho


def make_symmetric(n: int, sigma: float) -> Generator:
    """Generator with equal holding rates sigma and uniform jump targets."""
    if n < 2:
        raise StateCountError(f"need at least 2 states, got {n}")
    if not (np.isfinite(sigma) and sigma > 0):
        raise GeneratorError(f"holding rate must be positive, got {sigma}")
    q = np.full((n, n), sigma / (n - 1))
    np.fill_diagonal(q, -sigma)
    return Generator(q=q)


def make_binary(sigma1: float, sigma2: float) -> Generator:
    """Two-state generator [[-s1, s1], [s2, -s2]]."""
    for s in (sigma1, sigma2):
        if not (np.isfinite(s) and s > 0):
            raise GeneratorError(f"holding rate must be positive, got {s}")
    return Generator(q=np.array([[-sigma1, sigma1], [sigma2, -sigma2]]))


def make_spread(
    n: int, sigma_min: float, sigma_max: float, p_min: float, p_max: float
) -> Generator:
    """Generator with holding rates linearly spread over [sigma_min, sigma_max].

    Row i (i = 1..n) targets the holding rate
    ``sigma_i = sigma_min + i * (sigma_max - sigma_min) / n``
    and its off-diagonal rates are linearly spread over
    ``[p_min * sigma_i / (n-1), p_max * sigma_i / (n-1)]`` in increasing
    column order, skipping the diagonal. The diagonal is then set to minus
    the realized off-diagonal row sum, which makes the result a legitimate
    generator regardless of rounding. Requires ``p_min + p_max = 2`` so the
    realized row rate equals the target.
    """
    if n < 2:
        raise StateCountError(f"need at least 2 states, got {n}")
    if not (0 < sigma_min <= sigma_max) or not np.isfinite(sigma_max):
        raise GeneratorError(
            f"need 0 < sigma_min <= sigma_max, got ({sigma_min}, {sigma_max})"
        )
    if p_min < 0:
        raise GeneratorError(f"p_min must be nonnegative, got {p_min}")
    if abs((p_min + p_max) - 2.0) > 1e-12:
        raise GeneratorError(f"p_min + p_max must equal 2, got {p_min + p_max}")
    q = np.zeros((n, n))
    for row in range(n):
        sigma_i = sigma_min + (row + 1) * (sigma_max - sigma_min) / n
        lo = p_min * sigma_i / (n - 1)
        hi = p_max * sigma_i / (n - 1)
        if n == 2:
            rates = np.array([(lo + hi) / 2.0])
        else:
            rates = np.linspace(lo, hi, n - 1)
        cols = [c for c in range(n) if c != row]
        q[row, cols] = rates
        q[row, row] = -rates.sum()
    return Generator(q=q)

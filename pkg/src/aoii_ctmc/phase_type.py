"""Single-regime absorbing Markov chains and the law of their absorption time.

An absorbing chain is the triple (a, b, beta): transient sub-generator,
absorption-rate block, and initial distribution over the transient states.
The time until absorption has density ``-beta e^{tA} A 1`` and moments
expressible through powers of ``A^{-1}``; the module also exposes the
embedded transition matrix of the chain and its fundamental (visit-count)
matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import SingularMatrixError, expm, linear_solve

_GEN_TOL = 1e-12


@dataclass(frozen=True)
class AmcSpec:
    """Absorbing-chain triple; validates on construction.

    a : (K, K) transient sub-generator (negative diagonal, nonnegative
        off-diagonal, nonsingular).
    b : (K, L) absorption rates; each row of [a | b] sums to zero.
    beta : (K,) initial probabilities over the transient states.
    """

    a: np.ndarray
    b: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"transient block must be square, got {a.shape}")
        k = a.shape[0]
        if b.ndim != 2 or b.shape[0] != k:
            raise ValueError(f"absorption block must have {k} rows, got {b.shape}")
        if beta.shape != (k,):
            raise ValueError(f"initial vector must have shape ({k},), got {beta.shape}")
        off = a.copy()
        np.fill_diagonal(off, 0.0)
        if off.min() < 0.0 or np.diag(a).max() >= 0.0:
            raise ValueError("transient block needs negative diagonal, nonnegative off-diagonal")
        if b.min() < 0.0:
            raise ValueError("absorption rates must be nonnegative")
        scale = max(1.0, np.abs(a).max())
        resid = np.abs(a.sum(axis=1) + b.sum(axis=1)).max()
        if resid > _GEN_TOL * scale:
            raise ValueError(f"[a | b] row sums deviate from zero by {resid:.3e}")
        if beta.min() < -_GEN_TOL or abs(beta.sum() - 1.0) > _GEN_TOL:
            raise ValueError("initial vector must be a probability distribution")
        try:
            linear_solve(a, np.ones(k))
        except SingularMatrixError as exc:
            raise ValueError("transient block is singular: some state is not transient") from exc
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "beta", beta)

    @property
    def k(self) -> int:
        return self.a.shape[0]

    @property
    def l(self) -> int:
        return self.b.shape[1]


def ph_pdf_cdf(spec: AmcSpec, t: float) -> tuple[float, float]:
    """Density and distribution function of the absorption time at t >= 0."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    survival = spec.beta @ expm(spec.a * t)
    density = -survival @ spec.a @ np.ones(spec.k)
    return float(density), float(1.0 - survival.sum())


def ph_moments(spec: AmcSpec) -> tuple[float, float]:
    """Mean and second moment of the absorption time.

    mean = -beta A^{-1} 1 and E[T^2] = 2 beta A^{-2} 1.
    """
    one = np.ones(spec.k)
    ainv1 = linear_solve(spec.a, one)
    ainv2 = linear_solve(spec.a, ainv1)
    return float(-spec.beta @ ainv1), float(2.0 * spec.beta @ ainv2)


def absorption_probs(spec: AmcSpec) -> np.ndarray:
    """Probability of ending in each absorbing state: -beta A^{-1} B."""
    return -spec.beta @ linear_solve(spec.a, spec.b)


def embedded_dtmc(a) -> np.ndarray:
    """Transient-to-transient matrix with rates scaled by the target column's
    diagonal: ``d_ij = -a_ij / a_jj`` for i != j, zero diagonal.

    See :func:`embedded_jump_chain` for the source-row scaling that gives the
    jump chain of the sojourn process; the two coincide when the diagonal of
    ``a`` is constant.
    """
    a = np.asarray(a, dtype=float)
    diag = np.diag(a)
    if np.any(diag == 0.0):
        raise ValueError("diagonal entries must be nonzero")
    d = -a / diag[None, :]
    np.fill_diagonal(d, 0.0)
    return d


def embedded_jump_chain(a) -> np.ndarray:
    """Jump-chain probabilities among transient states: ``d_ij = -a_ij / a_ii``
    for i != j, zero diagonal. Row sums are <= 1, with the deficit being the
    per-jump absorption probability."""
    a = np.asarray(a, dtype=float)
    diag = np.diag(a)
    if np.any(diag == 0.0):
        raise ValueError("diagonal entries must be nonzero")
    d = -a / diag[:, None]
    np.fill_diagonal(d, 0.0)
    return d


def fundamental_matrix(d) -> np.ndarray:
    """Expected visit counts (I - D)^{-1} of a substochastic matrix D."""
    d = np.asarray(d, dtype=float)
    radius = np.abs(np.linalg.eigvals(d)).max() if d.size else 0.0
    if radius >= 1.0:
        raise ValueError(f"spectral radius {radius:.6f} >= 1; visit counts diverge")
    return linear_solve(np.eye(d.shape[0]) - d, np.eye(d.shape[0]))

"""Absorption laws of a CTMC whose generator switches at fixed time boundaries.

The chain evolves with sub-generator pair (A_m, B_m) on the m-th interval
[gamma_m, gamma_{m+1}), gamma_1 = 0 and gamma_{M+1} = infinity. The initial
vector of each interval follows from propagating the previous one through
its matrix exponential, which keeps the transient occupancy continuous at
the boundaries. Absorption-time moments and absorption-split probabilities
then reduce to sums of the closed-form interval integrals implemented in
:func:`regime_integral`.

The integrals, obtained by integration by parts (t^r beta e^{A(t-l)} v over
[l, u] or [l, inf)):

  order 0:  beta (e^{A(u-l)} - I) A^{-1} b            (finite upper)
            -beta A^{-1} b                            (infinite upper)
  order 1:  -beta e^{A(u-l)} (u A - I) A^{-1} 1 + beta (l A - I) A^{-1} 1
            beta (l A - I) A^{-1} 1                   (infinite upper)
  order 2:  -beta e^{A(u-l)} (u^2 A^2 - 2u A + 2I) A^{-2} 1
              + beta (l^2 A^2 - 2l A + 2I) A^{-2} 1
            beta (l^2 A^2 - 2l A + 2I) A^{-2} 1       (infinite upper)

where the order-1/2 integrands carry the density factor ``-A 1`` and the
order-0 integrand carries an absorption column ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import SingularMatrixError, expm, linear_solve

_GEN_TOL = 1e-12


@dataclass(frozen=True)
class MrphSpec:
    """Piecewise-constant absorbing chain; validates on construction.

    gammas : (M,) strictly increasing finite boundaries, gammas[0] == 0.
    a_mats : (M, K, K) per-interval transient sub-generators.
    b_mats : (M, K, L) per-interval absorption-rate blocks.
    beta1  : (K,) initial distribution over the transient states.
    """

    gammas: np.ndarray
    a_mats: np.ndarray
    b_mats: np.ndarray
    beta1: np.ndarray

    def __post_init__(self):
        gammas = np.asarray(self.gammas, dtype=float)
        a_mats = np.asarray(self.a_mats, dtype=float)
        b_mats = np.asarray(self.b_mats, dtype=float)
        beta1 = np.asarray(self.beta1, dtype=float)
        if gammas.ndim != 1 or gammas.size < 1:
            raise ValueError("need at least one regime boundary")
        if gammas[0] != 0.0:
            raise ValueError(f"first boundary must be 0, got {gammas[0]}")
        if not np.all(np.isfinite(gammas)) or np.any(np.diff(gammas) <= 0.0):
            raise ValueError("boundaries must be finite and strictly increasing")
        m = gammas.size
        if a_mats.ndim != 3 or a_mats.shape[0] != m or a_mats.shape[1] != a_mats.shape[2]:
            raise ValueError(f"expected {m} square transient blocks, got {a_mats.shape}")
        k = a_mats.shape[1]
        if b_mats.ndim != 3 or b_mats.shape[:2] != (m, k):
            raise ValueError(f"expected absorption blocks shaped ({m}, {k}, L), got {b_mats.shape}")
        if beta1.shape != (k,):
            raise ValueError(f"initial vector must have shape ({k},), got {beta1.shape}")
        if beta1.min() < -_GEN_TOL or abs(beta1.sum() - 1.0) > _GEN_TOL:
            raise ValueError("initial vector must be a probability distribution")
        for r in range(m):
            a, b = a_mats[r], b_mats[r]
            off = a.copy()
            np.fill_diagonal(off, 0.0)
            if off.min() < 0.0 or np.diag(a).max() >= 0.0:
                raise ValueError(f"regime {r}: bad transient block signs")
            if b.min() < 0.0:
                raise ValueError(f"regime {r}: absorption rates must be nonnegative")
            scale = max(1.0, np.abs(a).max())
            resid = np.abs(a.sum(axis=1) + b.sum(axis=1)).max()
            if resid > _GEN_TOL * scale:
                raise ValueError(f"regime {r}: [a | b] row sums deviate by {resid:.3e}")
            try:
                linear_solve(a, np.ones(k))
            except SingularMatrixError as exc:
                raise ValueError(f"regime {r}: transient block is singular") from exc
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "a_mats", a_mats)
        object.__setattr__(self, "b_mats", b_mats)
        object.__setattr__(self, "beta1", beta1)

    @property
    def m(self) -> int:
        return self.gammas.size

    @property
    def k(self) -> int:
        return self.a_mats.shape[1]

    @property
    def l(self) -> int:
        return self.b_mats.shape[2]


def propagate_initials(spec: MrphSpec) -> np.ndarray:
    """Per-regime initial occupancy vectors, shape (M, K).

    Row m+1 is row m pushed through e^{A_m (gamma_{m+1} - gamma_m)}, so the
    transient occupancy is continuous across the boundaries.
    """
    betas = np.empty((spec.m, spec.k))
    betas[0] = spec.beta1
    for m in range(spec.m - 1):
        dt = spec.gammas[m + 1] - spec.gammas[m]
        betas[m + 1] = betas[m] @ expm(spec.a_mats[m] * dt)
    return betas


def _regime_index(spec: MrphSpec, t: float) -> int:
    # half-open intervals [gamma_m, gamma_{m+1}); boundary t belongs to the right
    return int(np.searchsorted(spec.gammas, t, side="right") - 1)


def mrph_pdf(spec: MrphSpec, t: float, betas: np.ndarray | None = None) -> float:
    """Density of the absorption time at t >= 0."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if betas is None:
        betas = propagate_initials(spec)
    m = _regime_index(spec, t)
    a = spec.a_mats[m]
    occupancy = betas[m] @ expm(a * (t - spec.gammas[m]))
    return float(-occupancy @ a @ np.ones(spec.k))


def absorption_rates(spec: MrphSpec, t: float, betas: np.ndarray | None = None) -> np.ndarray:
    """Instantaneous absorption rate into each absorbing state at time t.

    Sums to the density :func:`mrph_pdf` at the same t.
    """
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if betas is None:
        betas = propagate_initials(spec)
    m = _regime_index(spec, t)
    occupancy = betas[m] @ expm(spec.a_mats[m] * (t - spec.gammas[m]))
    return occupancy @ spec.b_mats[m]


def regime_integral(
    beta: np.ndarray,
    a: np.ndarray,
    lower: float,
    upper: float,
    order: int,
    absorb_col: np.ndarray | None = None,
) -> float:
    """Closed-form interval integral of t^order times the regime integrand.

    For order 1 and 2 the integrand is ``t^order beta e^{A(t-lower)} (-A 1)``
    (the density contribution of the regime); for order 0 it is
    ``beta e^{A(t-lower)} absorb_col`` (an absorption-rate contribution).
    ``upper`` may be ``math.inf``. Returns 0 for an empty interval.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1, or 2, got {order}")
    if order == 0 and absorb_col is None:
        raise ValueError("order 0 requires an absorption column")
    if not lower <= upper:
        raise ValueError(f"need lower <= upper, got ({lower}, {upper})")
    if lower == upper:
        return 0.0
    beta = np.asarray(beta, dtype=float)
    a = np.asarray(a, dtype=float)
    one = np.ones(a.shape[0])
    if order == 0:
        v = linear_solve(a, np.asarray(absorb_col, dtype=float))
        if math.isinf(upper):
            return float(-beta @ v)
        return float(beta @ (expm(a * (upper - lower)) @ v - v))
    ainv1 = linear_solve(a, one)
    if order == 1:
        tail = beta @ (lower * one - ainv1)
        if math.isinf(upper):
            return float(tail)
        front = beta @ expm(a * (upper - lower)) @ (upper * one - ainv1)
        return float(tail - front)
    ainv2 = linear_solve(a, ainv1)
    tail = beta @ (lower**2 * one - 2.0 * lower * ainv1 + 2.0 * ainv2)
    if math.isinf(upper):
        return float(tail)
    front = beta @ expm(a * (upper - lower)) @ (upper**2 * one - 2.0 * upper * ainv1 + 2.0 * ainv2)
    return float(tail - front)


def mrph_moments(spec: MrphSpec, betas: np.ndarray | None = None) -> tuple[float, float]:
    """Mean and second moment of the absorption time."""
    if betas is None:
        betas = propagate_initials(spec)
    mean = 0.0
    second = 0.0
    for m in range(spec.m):
        lower = spec.gammas[m]
        upper = spec.gammas[m + 1] if m + 1 < spec.m else math.inf
        mean += regime_integral(betas[m], spec.a_mats[m], lower, upper, order=1)
        second += regime_integral(betas[m], spec.a_mats[m], lower, upper, order=2)
    return mean, second


def mrph_absorption_probs(spec: MrphSpec, betas: np.ndarray | None = None) -> np.ndarray:
    """Probability of absorbing into each absorbing state, shape (L,)."""
    if betas is None:
        betas = propagate_initials(spec)
    probs = np.zeros(spec.l)
    for m in range(spec.m):
        lower = spec.gammas[m]
        upper = spec.gammas[m + 1] if m + 1 < spec.m else math.inf
        for col in range(spec.l):
            probs[col] += regime_integral(
                betas[m], spec.a_mats[m], lower, upper, order=0,
                absorb_col=spec.b_mats[m][:, col],
            )
    return probs

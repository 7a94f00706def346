"""Per-cycle absorbing chains for each transmission policy.

A cycle starts when source and monitor synchronize at value j and ends at
the next synchronization. Conditioned on the sync value, the out-of-sync
excursion is an absorbing chain over the remaining source states whose
absorption split encodes the next sync value. Threshold policies make the
chain's rates switch when age thresholds are crossed, which is exactly the
piecewise-constant structure handled by :mod:`aoii_ctmc.mrph`; the sampling
baseline that transmits at a fixed Poisson intensity stays single-regime on
a doubled (state, transmitting?) space.

The per-cycle quantities returned are the expected duration d (including
the in-sync holding time), the expected accumulated age a (the excursion
length T contributes T^2/2 since age grows at unit slope), the expected
number of transmission attempts c, and the next-sync distribution p.

``binary_closed_form`` and ``symmetric_closed_form`` are deliberately
scalar-only re-derivations (no shared linear-algebra code) so the test
suite can use them as independent oracles for the general machinery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctmc import Channel, Generator
from .mrph import MrphSpec, mrph_absorption_probs, mrph_moments, propagate_initials, regime_integral
from .numerics import expm, linear_solve
from .phase_type import AmcSpec, absorption_probs, embedded_jump_chain, ph_moments


@dataclass(frozen=True)
class CycleParams:
    """Expected per-cycle quantities for one sync value.

    d : expected cycle duration (time), includes the in-sync holding time
    a : expected age area accumulated over the cycle (time^2)
    c : expected number of transmission attempts
    p : next-sync distribution over the N states
    """

    d: float
    a: float
    c: float
    p: np.ndarray


def _check_taus(g: Generator, j: int, taus) -> np.ndarray:
    taus = np.asarray(taus, dtype=float)
    if taus.shape != (g.n,):
        raise ValueError(f"need one threshold per state (entry {j} ignored), got shape {taus.shape}")
    active = np.delete(taus, j)
    if np.any(np.isnan(active)) or np.any(active < 0):
        raise ValueError("thresholds must be nonnegative (or +inf)")
    return taus


def esat_regimes(g: Generator, j: int, taus) -> tuple[np.ndarray, list[frozenset[int]]]:
    """Regime boundaries and per-regime transmitting-state sets for cycle-j.

    Boundaries are the sorted distinct finite values of {0} union the
    thresholds; the m-th set holds the source states whose threshold has
    been reached by the m-th boundary. Infinite thresholds never enter any
    set. Returns (boundaries, sets) with sets indexed by source state.
    """
    taus = _check_taus(g, j, taus)
    others = [i for i in range(g.n) if i != j]
    finite = sorted({0.0} | {float(taus[i]) for i in others if math.isfinite(taus[i])})
    gammas = np.array(finite)
    vsets = [frozenset(i for i in others if taus[i] <= gamma) for gamma in gammas]
    return gammas, vsets


def build_esat_mrph(g: Generator, ch: Channel, j: int, taus) -> MrphSpec:
    """Multi-regime absorbing chain of the cycle-j excursion under per-state
    thresholds. Transient states are the source states except j (in index
    order); absorbing states are the N possible next sync values."""
    taus = _check_taus(g, j, taus)
    gammas, vsets = esat_regimes(g, j, taus)
    others = [i for i in range(g.n) if i != j]
    k = g.n - 1
    a_mats = np.empty((gammas.size, k, k))
    b_mats = np.zeros((gammas.size, k, g.n))
    base = g.q[np.ix_(others, others)]
    for m, vset in enumerate(vsets):
        a = base.copy()
        b = np.zeros((k, g.n))
        for row, i in enumerate(others):
            b[row, j] = g.q[i, j]
            if i in vset:
                a[row, row] -= ch.mu
                b[row, i] = ch.mu
        a_mats[m] = a
        b_mats[m] = b
    beta1 = g.q[j, others] / g.sigmas[j]
    return MrphSpec(gammas=gammas, a_mats=a_mats, b_mats=b_mats, beta1=beta1)


class EsatCycleContext:
    """Repeated cycle-j evaluations for one (source, channel, j).

    Grid searches evaluate the same sub-generators with many boundary
    spacings, so per-set solve products are computed once and matrix
    exponentials are memoized by (set, spacing).
    """

    def __init__(self, g: Generator, ch: Channel, j: int):
        self.g = g
        self.ch = ch
        self.j = j
        self.others = [i for i in range(g.n) if i != j]
        self.k = g.n - 1
        self.sigma_j = float(g.sigmas[j])
        self.beta1 = g.q[j, self.others] / self.sigma_j
        self._base = g.q[np.ix_(self.others, self.others)]
        # arrival-rate columns for attempt counting: w_k[r] = q[others[r], others[k]], zero at r == k
        self._wcols = self._base.copy()
        np.fill_diagonal(self._wcols, 0.0)
        self._regime_cache: dict[frozenset, dict] = {}
        self._expm_cache: dict[tuple[frozenset, float], np.ndarray] = {}

    def _regime(self, vset: frozenset) -> dict:
        data = self._regime_cache.get(vset)
        if data is not None:
            return data
        a = self._base.copy()
        bcols = np.zeros((self.k, self.g.n))
        bcols[:, self.j] = self.g.q[self.others, self.j]
        for row, i in enumerate(self.others):
            if i in vset:
                a[row, row] -= self.ch.mu
                bcols[row, i] = self.ch.mu
        one = np.ones(self.k)
        rhs = np.concatenate([one[:, None], bcols, self._wcols], axis=1)
        sol = linear_solve(a, rhs)
        u1 = sol[:, 0]
        data = {
            "a": a,
            "u1": u1,
            "u2": linear_solve(a, u1),
            "vb": sol[:, 1 : 1 + self.g.n],
            "vw": sol[:, 1 + self.g.n :],
        }
        self._regime_cache[vset] = data
        return data

    def _propagator(self, vset: frozenset, dt: float) -> np.ndarray:
        key = (vset, dt)
        e = self._expm_cache.get(key)
        if e is None:
            e = expm(self._regime(vset)["a"] * dt)
            self._expm_cache[key] = e
        return e

    def params(self, taus) -> CycleParams:
        taus = _check_taus(self.g, self.j, taus)
        others = self.others
        finite = sorted({0.0} | {float(taus[i]) for i in others if math.isfinite(taus[i])})
        n_regimes = len(finite)
        vsets = [frozenset(i for i in others if taus[i] <= gamma) for gamma in finite]
        regimes = [self._regime(v) for v in vsets]
        betas = [self.beta1]
        for m in range(n_regimes - 1):
            betas.append(betas[m] @ self._propagator(vsets[m], finite[m + 1] - finite[m]))

        mean_t = 0.0
        second_t = 0.0
        p = np.zeros(self.g.n)
        for m in range(n_regimes):
            beta, reg = betas[m], regimes[m]
            lower = finite[m]
            t1 = beta @ (lower - reg["u1"])
            t2 = beta @ (lower * lower - 2.0 * lower * reg["u1"] + 2.0 * reg["u2"])
            pv = beta @ reg["vb"]
            if m + 1 < n_regimes:
                upper, beta_next = finite[m + 1], betas[m + 1]
                t1 -= beta_next @ (upper - reg["u1"])
                t2 -= beta_next @ (upper * upper - 2.0 * upper * reg["u1"] + 2.0 * reg["u2"])
                p += beta_next @ reg["vb"] - pv
            else:
                p += -pv
            mean_t += t1
            second_t += t2

        c_total = 0.0
        for pos, i in enumerate(others):
            tau_i = taus[i]
            if not math.isfinite(tau_i):
                continue
            m_i = finite.index(tau_i)
            c_i = betas[m_i][pos]
            for m in range(m_i, n_regimes):
                beta, reg = betas[m], regimes[m]
                if m + 1 < n_regimes:
                    c_i += betas[m + 1] @ reg["vw"][:, pos] - beta @ reg["vw"][:, pos]
                else:
                    c_i += -beta @ reg["vw"][:, pos]
            c_total += c_i

        return CycleParams(
            d=float(mean_t + 1.0 / self.sigma_j),
            a=float(second_t / 2.0),
            c=float(c_total),
            p=p,
        )


def esat_cycle(g: Generator, ch: Channel, j: int, taus) -> CycleParams:
    """Cycle-j quantities under per-state age thresholds.

    ``taus`` has one entry per source state (entry j is ignored); entries
    may be +inf, meaning the corresponding state never transmits.
    """
    return EsatCycleContext(g, ch, j).params(taus)


def eat_cycle(g: Generator, ch: Channel, j: int, tau: float) -> CycleParams:
    """Cycle-j quantities when one threshold tau governs every source state.

    Two-regime compact forms: with A1 the out-of-sync sub-generator and
    A2 = A1 - mu I its transmitting counterpart,

      E[T]   = beta2 (A1^{-1} - A2^{-1}) 1 - beta1 A1^{-1} 1
      E[T^2] = 2 [tau beta2 (A1^{-1}-A2^{-1}) 1 - beta2 (A1^{-2}-A2^{-2}) 1
                   + beta1 A1^{-2} 1]
      c      = beta2 (I - D)^{-1} 1   with D the jump chain of A2
      p_i    = -mu beta2 A2^{-1} e_i  for i != j

    where beta2 = beta1 e^{A1 tau}. Agrees with :func:`esat_cycle` at equal
    thresholds.
    """
    if not (np.isfinite(tau) and tau >= 0):
        raise ValueError(f"threshold must be finite and nonnegative, got {tau}")
    others = [i for i in range(g.n) if i != j]
    k = g.n - 1
    sigma_j = g.sigmas[j]
    a1 = g.q[np.ix_(others, others)]
    a2 = a1 - ch.mu * np.eye(k)
    beta1 = g.q[j, others] / sigma_j
    beta2 = beta1 @ expm(a1 * tau)
    one = np.ones(k)
    u1_1 = linear_solve(a1, one)
    u2_1 = linear_solve(a1, u1_1)
    u1_2 = linear_solve(a2, one)
    u2_2 = linear_solve(a2, u1_2)
    mean_t = beta2 @ (u1_1 - u1_2) - beta1 @ u1_1
    a_val = tau * (beta2 @ (u1_1 - u1_2)) - beta2 @ (u2_1 - u2_2) + beta1 @ u2_1
    visits = linear_solve(np.eye(k) - embedded_jump_chain(a2), one)
    c_val = beta2 @ visits
    row = linear_solve(a2.T, beta2)  # beta2 A2^{-1}
    p = np.zeros(g.n)
    p[others] = -ch.mu * row
    p[j] = 1.0 - p.sum()
    return CycleParams(d=float(mean_t + 1.0 / sigma_j), a=float(a_val), c=float(c_val), p=p)


def ps_cycle(g: Generator, ch: Channel, gamma: float, j: int) -> CycleParams:
    """Cycle-j quantities under Poisson sampling at intensity gamma.

    The excursion is a single-regime absorbing chain on the doubled space
    (state, idle) / (state, transmitting) for states != j: samples arrive at
    rate gamma while idle and start a transmission; source jumps preempt;
    service completes at rate mu. Every sample costs one attempt, including
    samples landing during an ongoing transmission (memoryless service makes
    them dynamically irrelevant), so c = gamma * E[excursion length].
    """
    if not (np.isfinite(gamma) and gamma >= 0):
        raise ValueError(f"sampling intensity must be nonnegative, got {gamma}")
    others = [i for i in range(g.n) if i != j]
    k = g.n - 1
    sigma = g.sigmas
    a = np.zeros((2 * k, 2 * k))
    b = np.zeros((2 * k, g.n))
    for r, i in enumerate(others):
        for r2, i2 in enumerate(others):
            if i2 != i:
                a[r, r2] = g.q[i, i2]
                a[k + r, r2] = g.q[i, i2]
        a[r, k + r] = gamma
        a[r, r] = -(sigma[i] + gamma)
        a[k + r, k + r] = -(sigma[i] + ch.mu)
        b[r, j] = g.q[i, j]
        b[k + r, j] = g.q[i, j]
        b[k + r, i] = ch.mu
    beta = np.zeros(2 * k)
    beta[:k] = g.q[j, others] / sigma[j]
    spec = AmcSpec(a=a, b=b, beta=beta)
    mean_t, second_t = ph_moments(spec)
    return CycleParams(
        d=mean_t + 1.0 / sigma[j],
        a=second_t / 2.0,
        c=gamma * mean_t,
        p=absorption_probs(spec),
    )


@dataclass(frozen=True)
class BinaryClosedForm:
    """Closed-form evaluation of the two-state source under per-state thresholds."""

    d1: float
    d2: float
    a1: float
    a2: float
    c1: float
    c2: float
    p12: float
    p11: float
    p21: float
    p22: float
    pi: tuple[float, float]
    maoii: float
    rate: float


def binary_closed_form(
    sigma1: float, sigma2: float, mu: float, tau1: float, tau2: float
) -> BinaryClosedForm:
    """Scalar closed forms for a two-state source; an independent oracle.

    Cycle-1's excursion sits in state 2 (and vice versa), so everything
    reduces to one-dimensional rates: with e1 = exp(-sigma2 tau1),

      d1 = e1/(sigma2+mu) - e1/sigma2 + 1/sigma2 + 1/sigma1
      a1 = tau1 e1 (1/(sigma2+mu) - 1/sigma2)
             + e1 (1/(sigma2+mu)^2 - 1/sigma2^2) + 1/sigma2^2
      c1 = e1,  p12 = mu/(sigma2+mu) e1

    and symmetrically for cycle-2.
    """
    for s in (sigma1, sigma2, mu):
        if not (s > 0 and math.isfinite(s)):
            raise ValueError(f"rates must be positive and finite, got {s}")
    if tau1 < 0 or tau2 < 0:
        raise ValueError("thresholds must be nonnegative")

    def one_cycle(sig_other: float, tau: float) -> tuple[float, float, float, float]:
        e = math.exp(-sig_other * tau)
        d = e / (sig_other + mu) - e / sig_other + 1.0 / sig_other
        a = (
            tau * e * (1.0 / (sig_other + mu) - 1.0 / sig_other)
            + e * (1.0 / (sig_other + mu) ** 2 - 1.0 / sig_other**2)
            + 1.0 / sig_other**2
        )
        c = e
        p_cross = mu / (sig_other + mu) * e
        return d, a, c, p_cross

    d1, a1, c1, p12 = one_cycle(sigma2, tau1)
    d1 += 1.0 / sigma1
    d2, a2, c2, p21 = one_cycle(sigma1, tau2)
    d2 += 1.0 / sigma2
    p11 = 1.0 - p12
    p22 = 1.0 - p21
    pi1 = p21 / (p12 + p21)
    pi2 = p12 / (p12 + p21)
    denom = pi1 * d1 + pi2 * d2
    return BinaryClosedForm(
        d1=d1, d2=d2, a1=a1, a2=a2, c1=c1, c2=c2,
        p12=p12, p11=p11, p21=p21, p22=p22, pi=(pi1, pi2),
        maoii=(pi1 * a1 + pi2 * a2) / denom,
        rate=(pi1 * c1 + pi2 * c2) / denom,
    )


def symmetric_closed_form(n: int, sigma: float, mu: float, tau: float) -> tuple[float, float]:
    """Mean age and sampling rate of a symmetric n-state source under a
    single threshold; an independent scalar oracle.

    Symmetry makes every sync value equally likely and collapses the matrix
    forms to scalars: with E = exp(-sigma tau/(n-1)), w = (n-1)/sigma and
    h = (n-1)/(sigma + mu (n-1)),

      d = (1 - E) w + E h + 1/sigma
      a = tau E (h - w) + E (h^2 - w^2) + w^2
      c = E / (1 - sigma (n-2) / ((sigma + mu)(n-1)))

    and the returned pair is (a/d, c/d). Well-defined for all positive
    parameters (the attempt-count denominator cannot vanish).
    """
    if n < 2:
        raise ValueError(f"need at least 2 states, got {n}")
    for s in (sigma, mu):
        if not (s > 0 and math.isfinite(s)):
            raise ValueError(f"rates must be positive and finite, got {s}")
    if tau < 0:
        raise ValueError(f"threshold must be nonnegative, got {tau}")
    e = math.exp(-sigma * tau / (n - 1))
    w = (n - 1) / sigma
    h = (n - 1) / (sigma + mu * (n - 1))
    d = (1.0 - e) * w + e * h + 1.0 / sigma
    a = tau * e * (h - w) + e * (h * h - w * w) + w * w
    c = e / (1.0 - sigma * (n - 2) / ((sigma + mu) * (n - 1)))
    return a / d, c / d

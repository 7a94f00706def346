"""Policy evaluation and threshold optimization under a sampling budget.

The embedded chain over sync values turns long-run averages into ratios of
stationary-weighted per-cycle quantities. The budgeted problem is solved by
penalizing attempts with a multiplier, running average-cost policy
iteration on the penalized objective, and bisecting the multiplier until
the achieved rate meets the budget; the single-threshold and Poisson
baselines bisect their scalar parameter against the rate directly.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, replace

import numpy as np

from .ctmc import Channel, Generator
from .cycles import CycleParams, EsatCycleContext, eat_cycle, esat_cycle, ps_cycle
from .numerics import SingularMatrixError, expm, linear_solve
from .phase_type import embedded_jump_chain


class OptimizeError(RuntimeError):
    """Base class for optimizer failures."""


class InfeasibleBudgetError(OptimizeError):
    """No parameter in the search range meets the budget."""


class GridCapError(OptimizeError):
    """An exhaustive threshold grid would exceed the configured size cap."""


@dataclass(frozen=True)
class EsatPolicy:
    """Per-(sync value, state) thresholds; (n, n) array, diagonal ignored,
    +inf entries mean the state never transmits in that cycle."""

    thresholds: np.ndarray

    @property
    def n(self) -> int:
        return self.thresholds.shape[0]


@dataclass(frozen=True)
class EatPolicy:
    """One threshold per sync value; (n,) array of finite nonnegative values."""

    taus: np.ndarray

    @property
    def n(self) -> int:
        return self.taus.shape[0]


@dataclass(frozen=True)
class StPolicy:
    """A single system-wide threshold."""

    tau: float


@dataclass(frozen=True)
class PsPolicy:
    """Poisson sampling at a fixed intensity while out of sync."""

    gamma: float


Policy = EsatPolicy | EatPolicy | StPolicy | PsPolicy


@dataclass(frozen=True)
class EvalResult:
    """Steady-state evaluation of a policy.

    pi : stationary distribution of the sync-value chain
    maoii : long-run mean age of incorrect information
    rate : long-run transmission-attempt rate
    cycles : per-sync-value cycle quantities
    method : provenance, "analytic" here ("simulated" for estimator output)
    """

    pi: np.ndarray
    maoii: float
    rate: float
    cycles: tuple[CycleParams, ...]
    method: str = "analytic"


@dataclass(frozen=True)
class SolveReport:
    """Trace of one policy-iteration run (plus the multiplier that drove it)."""

    lambda_star: float
    eta_trace: tuple[float, ...]
    value_vector: np.ndarray
    iterations: int
    converged: bool
    notes: tuple[str, ...] = ()


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and search ranges for every optimizer entry point."""

    eps_eta: float = 1e-6
    eps_lambda: float = 1e-3
    eps_tau: float = 1e-3
    delta_tau: float = 0.05
    tau_max: float = 10.0
    lambda_max: float = 100.0
    lambda_max_ceiling: float = 1e4
    gamma_max: float = 1e4
    grid_cap: int = 10_000_000
    max_policy_iterations: int = 100
    max_bisect_iterations: int = 200


def steady_state(p) -> np.ndarray:
    """Stationary distribution of a row-stochastic irreducible matrix.

    Solves pi (P + 1 1^T - I) = 1^T, a nonsingular system exactly when the
    chain has a unique stationary law.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"transition matrix must be square, got {p.shape}")
    if p.min() < -1e-12 or np.abs(p.sum(axis=1) - 1.0).max() > 1e-8:
        raise ValueError("matrix is not row-stochastic")
    n = p.shape[0]
    try:
        pi = linear_solve((p + np.ones((n, n)) - np.eye(n)).T, np.ones(n))
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            "stationary system is singular; the sync-value chain looks reducible",
            condition=exc.condition,
        ) from exc
    return pi


def _policy_cycles(g: Generator, ch: Channel, policy: Policy) -> list[CycleParams]:
    if isinstance(policy, EsatPolicy):
        return [esat_cycle(g, ch, j, policy.thresholds[j]) for j in range(g.n)]
    if isinstance(policy, EatPolicy):
        return [eat_cycle(g, ch, j, float(policy.taus[j])) for j in range(g.n)]
    if isinstance(policy, StPolicy):
        return [eat_cycle(g, ch, j, policy.tau) for j in range(g.n)]
    if isinstance(policy, PsPolicy):
        return [ps_cycle(g, ch, policy.gamma, j) for j in range(g.n)]
    raise TypeError(f"unknown policy type {type(policy).__name__}")


def _ratios(cycles: list[CycleParams], pi: np.ndarray) -> tuple[float, float]:
    d = pi @ np.array([c.d for c in cycles])
    return (
        float(pi @ np.array([c.a for c in cycles]) / d),
        float(pi @ np.array([c.c for c in cycles]) / d),
    )


def evaluate_policy(g: Generator, ch: Channel, policy: Policy) -> EvalResult:
    """Exact steady-state age and attempt rate of a fully specified policy."""
    cycles = _policy_cycles(g, ch, policy)
    pi = steady_state(np.vstack([c.p for c in cycles]))
    maoii, rate = _ratios(cycles, pi)
    return EvalResult(pi=pi, maoii=maoii, rate=rate, cycles=tuple(cycles))


def value_determination(cycles: list[CycleParams], lam: float) -> tuple[float, np.ndarray]:
    """Long-run average penalized cost eta and relative values of the
    sync-value chain under the current policy.

    Solves V_j = a_j + lam c_j - eta d_j + sum_i p_ji V_i with V_{N-1} = 0;
    the N unknowns are (V_0..V_{N-2}, eta).
    """
    n = len(cycles)
    p = np.vstack([c.p for c in cycles])
    lhs = np.zeros((n, n))
    lhs[:, : n - 1] = np.eye(n)[:, : n - 1] - p[:, : n - 1]
    lhs[:, n - 1] = np.array([c.d for c in cycles])
    rhs = np.array([c.a + lam * c.c for c in cycles])
    sol = linear_solve(lhs, rhs)
    values = np.append(sol[: n - 1], 0.0)
    eta = float(sol[n - 1])
    resid = np.abs(
        values - (rhs - eta * lhs[:, n - 1] + p @ values)
    ).max()
    scale = max(1.0, np.abs(rhs).max())
    if resid > 1e-10 * scale:
        raise SingularMatrixError(
            f"value-determination residual {resid:.3e} too large; chain may be reducible"
        )
    return eta, values


class _EatImprover:
    """Continuous single-threshold improvement for one sync value.

    Minimizes the per-cycle test quantity
    f(tau) = [a(tau) + lam c(tau) + sum_i p_i(tau) (V_i - V_j)] / d(tau)
    using its exact derivative: candidate minima are the derivative's sign
    changes on a coarse grid, refined by bisection, audited against the grid
    values themselves.
    """

    def __init__(self, g: Generator, ch: Channel, j: int):
        self.j = j
        self.n = g.n
        others = [i for i in range(g.n) if i != j]
        self.others = others
        k = g.n - 1
        self.a1 = g.q[np.ix_(others, others)]
        self.a2 = self.a1 - ch.mu * np.eye(k)
        self.mu = ch.mu
        self.beta1 = g.q[j, others] / g.sigmas[j]
        one = np.ones(k)
        u1_1 = linear_solve(self.a1, one)
        u1_2 = linear_solve(self.a2, one)
        u2_1 = linear_solve(self.a1, u1_1)
        u2_2 = linear_solve(self.a2, u1_2)
        self.m11 = u1_1 - u1_2
        self.m21 = u2_1 - u2_2
        self.visits = linear_solve(np.eye(k) - embedded_jump_chain(self.a2), one)
        self.kd = float(-self.beta1 @ u1_1 + 1.0 / g.sigmas[j])
        self.ka = float(self.beta1 @ u2_1)

    def _fixed_vec(self, lam: float, values: np.ndarray) -> np.ndarray:
        vdiff = values[self.others] - values[self.j]
        return -self.m21 + lam * self.visits - self.mu * linear_solve(self.a2, vdiff)

    def _f_fp(self, phi: np.ndarray, tau: float, s: np.ndarray) -> tuple[float, float]:
        w = tau * self.m11 + s
        num = float(phi @ w + self.ka)
        den = float(phi @ self.m11 + self.kd)
        dnum = float(phi @ (self.a1 @ w + self.m11))
        dden = float(phi @ (self.a1 @ self.m11))
        return num / den, (dnum * den - num * dden) / den**2

    def improve(self, lam: float, values: np.ndarray, cfg: SolverConfig) -> tuple[float, bool]:
        s = self._fixed_vec(lam, values)
        steps = max(1, round(cfg.tau_max / cfg.delta_tau))
        grid = np.linspace(0.0, cfg.tau_max, steps + 1)
        e_step = expm(self.a1 * (grid[1] - grid[0]))
        phis = np.empty((grid.size, self.beta1.size))
        phis[0] = self.beta1
        for i in range(1, grid.size):
            phis[i] = phis[i - 1] @ e_step
        fs = np.empty(grid.size)
        fps = np.empty(grid.size)
        for i, tau in enumerate(grid):
            fs[i], fps[i] = self._f_fp(phis[i], tau, s)
        best = int(np.argmin(fs))
        candidates = [(float(fs[best]), float(grid[best]))]
        for i in np.flatnonzero(np.sign(fps[:-1]) * np.sign(fps[1:]) < 0):
            lo, hi = float(grid[i]), float(grid[i + 1])
            sign_lo = np.sign(fps[i])
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                _, fp_mid = self._f_fp(self.beta1 @ expm(self.a1 * mid), mid, s)
                if fp_mid == 0.0:
                    break
                if np.sign(fp_mid) == sign_lo:
                    lo = mid
                else:
                    hi = mid
            mid = 0.5 * (lo + hi)
            f_mid, _ = self._f_fp(self.beta1 @ expm(self.a1 * mid), mid, s)
            candidates.append((float(f_mid), mid))
        # smaller tau wins ties so a flat objective lands on 0
        candidates.sort(key=lambda t: (t[0], t[1]))
        return candidates[0][1], True


def improve_eat(
    g: Generator, ch: Channel, j: int, lam: float, values: np.ndarray,
    cfg: SolverConfig | None = None,
) -> float:
    """Best single threshold for cycle-j given multiplier and relative values."""
    cfg = cfg or SolverConfig()
    tau, _ = _EatImprover(g, ch, j).improve(lam, values, cfg)
    return tau


class EsatGridTable:
    """Cycle quantities for every grid combination of cycle-j thresholds.

    Tabulated once per (source, channel, j, grid); policy improvement for
    any multiplier and value vector is then a vectorized argmin. Combos are
    enumerated in lexicographic order over the per-state grids, so argmin
    tie-breaking is lexicographic.
    """

    def __init__(self, g: Generator, ch: Channel, j: int, cfg: SolverConfig):
        steps = max(1, round(cfg.tau_max / cfg.delta_tau))
        self.grid = np.linspace(0.0, cfg.tau_max, steps + 1)
        k = g.n - 1
        combos = self.grid.size**k
        if combos > cfg.grid_cap:
            raise GridCapError(
                f"threshold grid for {g.n} states needs {self.grid.size}^{k} = "
                f"{combos:.3e} points, above the cap of {cfg.grid_cap:.1e}; "
                "use the per-sync-value or single-threshold family instead"
            )
        self.j = j
        self.n = g.n
        self.others = [i for i in range(g.n) if i != j]
        ctx = EsatCycleContext(g, ch, j)
        self.d = np.empty(combos)
        self.a = np.empty(combos)
        self.c = np.empty(combos)
        self.p = np.empty((combos, g.n))
        taus = np.zeros(g.n)
        for idx, combo in enumerate(itertools.product(self.grid, repeat=k)):
            taus[self.others] = combo
            cp = ctx.params(taus)
            self.d[idx] = cp.d
            self.a[idx] = cp.a
            self.c[idx] = cp.c
            self.p[idx] = cp.p

    def _combo_taus(self, flat_index: int) -> np.ndarray:
        taus = np.zeros(self.n)
        shape = (self.grid.size,) * (self.n - 1)
        for pos, gi in zip(self.others, np.unravel_index(flat_index, shape)):
            taus[pos] = self.grid[gi]
        return taus

    def lookup(self, taus) -> CycleParams:
        """Cycle quantities of an on-grid threshold vector."""
        shape = (self.grid.size,) * (self.n - 1)
        gidx = []
        for i in self.others:
            k = int(np.searchsorted(self.grid, taus[i]))
            if k >= self.grid.size or taus[i] != self.grid[k]:
                raise ValueError(f"threshold {taus[i]} for state {i} is off-grid")
            gidx.append(k)
        flat = int(np.ravel_multi_index(tuple(gidx), shape))
        return CycleParams(d=self.d[flat], a=self.a[flat], c=self.c[flat], p=self.p[flat])

    def improve(self, lam: float, values: np.ndarray) -> np.ndarray:
        objective = (self.a + lam * self.c + self.p @ (values - values[self.j])) / self.d
        return self._combo_taus(int(np.argmin(objective)))


class EsatGridTables:
    """Lazy per-sync-value grid tables shared across multiplier bisection."""

    def __init__(self, g: Generator, ch: Channel, cfg: SolverConfig):
        self.g = g
        self.ch = ch
        self.cfg = cfg
        self._tables: dict[int, EsatGridTable] = {}

    def get(self, j: int) -> EsatGridTable:
        if j not in self._tables:
            self._tables[j] = EsatGridTable(self.g, self.ch, j, self.cfg)
        return self._tables[j]


def improve_esat(
    g: Generator, ch: Channel, j: int, lam: float, values: np.ndarray,
    cfg: SolverConfig | None = None, table: EsatGridTable | None = None,
) -> np.ndarray:
    """Exhaustive grid minimization of the cycle-j test quantity; returns a
    full-length threshold vector (entry j is zero and ignored)."""
    cfg = cfg or SolverConfig()
    table = table or EsatGridTable(g, ch, j, cfg)
    return table.improve(lam, values)


def policy_iteration(
    g: Generator,
    ch: Channel,
    lam: float,
    family: str,
    cfg: SolverConfig | None = None,
    esat_tables: EsatGridTables | None = None,
) -> tuple[Policy, SolveReport]:
    """Average-cost policy iteration over per-cycle thresholds.

    Starts from all-zero thresholds and alternates cycle evaluation, value
    determination, and per-sync-value improvement until the long-run
    penalized cost stops moving by more than eps_eta.
    """
    cfg = cfg or SolverConfig()
    if family not in ("esat", "eat"):
        raise ValueError(f"family must be 'esat' or 'eat', got {family!r}")
    n = g.n
    notes: list[str] = []
    if family == "esat":
        tables = esat_tables or EsatGridTables(g, ch, cfg)
        thresholds = np.zeros((n, n))

        def current_cycles():
            return [tables.get(j).lookup(thresholds[j]) for j in range(n)]

        def improve_all(values):
            for j in range(n):
                thresholds[j] = tables.get(j).improve(lam, values)

        def current_policy():
            return EsatPolicy(thresholds=thresholds.copy())

    else:
        improvers = [_EatImprover(g, ch, j) for j in range(n)]
        taus = np.zeros(n)

        def current_cycles():
            return [eat_cycle(g, ch, j, float(taus[j])) for j in range(n)]

        def improve_all(values):
            for j in range(n):
                taus[j], clean = improvers[j].improve(lam, values, cfg)
                if not clean:
                    notes.append(f"improvement refinement hit iteration cap at state {j}")

        def current_policy():
            return EatPolicy(taus=taus.copy())

    eta_trace: list[float] = []
    values = np.zeros(n)
    converged = False
    for _ in range(cfg.max_policy_iterations):
        eta, values = value_determination(current_cycles(), lam)
        eta_trace.append(eta)
        if len(eta_trace) >= 2 and abs(eta_trace[-1] - eta_trace[-2]) <= cfg.eps_eta:
            converged = True
            break
        improve_all(values)
    if not converged:
        notes.append("policy iteration hit its sweep cap")
    return current_policy(), SolveReport(
        lambda_star=lam,
        eta_trace=tuple(eta_trace),
        value_vector=values,
        iterations=len(eta_trace),
        converged=converged,
        notes=tuple(notes),
    )


@dataclass(frozen=True)
class ConstrainedResult:
    """Outcome of a budgeted optimization for one policy family.

    ``result`` is None only for the zero-budget Poisson corner, whose
    never-transmitting sync chain has no unique stationary law.
    """

    policy: Policy
    result: EvalResult | None
    lambda_star: float | None = None
    report: SolveReport | None = None
    rate_tolerance: float = 0.0
    saturated: bool = False


def lagrangian_bisection(
    g: Generator, ch: Channel, budget: float, family: str,
    cfg: SolverConfig | None = None,
    esat_tables: EsatGridTables | None = None,
) -> ConstrainedResult:
    """Smallest multiplier whose penalized-optimal policy meets the budget.

    Runs policy iteration at 0 first; if the unconstrained optimum already
    satisfies the budget it is returned with a zero multiplier. Otherwise
    the multiplier is bisected until the achieved rate is within eps_lambda
    of the budget. Exhaustive-grid families quantize the achievable rates,
    so when the bisection bracket collapses between two grid policies the
    feasible-side policy is returned and ``rate_tolerance`` widens to the
    observed rate gap. Passing ``esat_tables`` shares the threshold-grid
    tabulation across calls with the same source and channel.
    """
    cfg = cfg or SolverConfig()
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")
    tables = None
    if family == "esat":
        tables = esat_tables or EsatGridTables(g, ch, cfg)

    def solve_at(lam: float) -> tuple[Policy, SolveReport, EvalResult]:
        pol, rep = policy_iteration(g, ch, lam, family, cfg, esat_tables=tables)
        return pol, rep, evaluate_policy(g, ch, pol)

    pol0, rep0, ev0 = solve_at(0.0)
    if ev0.rate <= budget:
        return ConstrainedResult(
            policy=pol0, result=ev0, lambda_star=0.0, report=rep0,
            rate_tolerance=cfg.eps_lambda,
        )
    lam_hi = cfg.lambda_max
    pol_hi, rep_hi, ev_hi = solve_at(lam_hi)
    while ev_hi.rate > budget and lam_hi < cfg.lambda_max_ceiling:
        lam_hi = min(2.0 * lam_hi, cfg.lambda_max_ceiling)
        pol_hi, rep_hi, ev_hi = solve_at(lam_hi)
    if ev_hi.rate > budget:
        raise InfeasibleBudgetError(
            f"rate at multiplier {lam_hi:g} is {ev_hi.rate:.6g} > budget {budget:g}; "
            "raise lambda_max"
        )
    lam_lo = 0.0
    rate_lo = ev0.rate
    best = (lam_hi, pol_hi, rep_hi, ev_hi)
    for _ in range(cfg.max_bisect_iterations):
        lam_mid = 0.5 * (lam_lo + lam_hi)
        pol, rep, ev = solve_at(lam_mid)
        if abs(ev.rate - budget) <= cfg.eps_lambda:
            return ConstrainedResult(
                policy=pol, result=ev, lambda_star=lam_mid, report=rep,
                rate_tolerance=cfg.eps_lambda,
            )
        if ev.rate >= budget:
            lam_lo, rate_lo = lam_mid, ev.rate
        else:
            lam_hi = lam_mid
            best = (lam_mid, pol, rep, ev)
        if lam_hi - lam_lo < 1e-12 * max(1.0, cfg.lambda_max):
            break
    lam_star, pol, rep, ev = best
    gap = rate_lo - ev.rate
    rep = replace(rep, notes=rep.notes + (
        f"rate quantized by the threshold grid; nearest rates straddle the "
        f"budget by {gap:.3e}",
    ))
    return ConstrainedResult(
        policy=pol, result=ev, lambda_star=lam_star, report=rep,
        rate_tolerance=cfg.eps_lambda + max(0.0, gap),
    )


def st_bisection(
    g: Generator, ch: Channel, budget: float, cfg: SolverConfig | None = None
) -> ConstrainedResult:
    """Smallest single threshold whose attempt rate meets the budget.

    The rate decreases in the threshold, so the optimum sits where the rate
    constraint binds (or at zero when it never binds).
    """
    cfg = cfg or SolverConfig()
    if not budget > 0:
        raise ValueError(f"budget must be positive, got {budget}")

    def at(tau: float) -> EvalResult:
        return evaluate_policy(g, ch, StPolicy(tau=tau))

    ev0 = at(0.0)
    if ev0.rate <= budget:
        return ConstrainedResult(policy=StPolicy(tau=0.0), result=ev0,
                                 rate_tolerance=cfg.eps_tau)
    ev_max = at(cfg.tau_max)
    if ev_max.rate > budget:
        raise InfeasibleBudgetError(
            f"rate at tau_max={cfg.tau_max:g} is {ev_max.rate:.6g} > budget "
            f"{budget:g}; raise tau_max"
        )
    lo, hi = 0.0, cfg.tau_max
    ev = ev_max
    tau_mid = hi
    for _ in range(cfg.max_bisect_iterations):
        tau_mid = 0.5 * (lo + hi)
        ev = at(tau_mid)
        # also collapse the bracket so tau itself is pinned to eps_tau
        if abs(ev.rate - budget) <= cfg.eps_tau and hi - lo <= cfg.eps_tau:
            break
        if ev.rate >= budget:
            lo = tau_mid
        else:
            hi = tau_mid
    return ConstrainedResult(policy=StPolicy(tau=tau_mid), result=ev,
                             rate_tolerance=cfg.eps_tau)


def ps_rate_match(
    g: Generator, ch: Channel, budget: float, cfg: SolverConfig | None = None
) -> ConstrainedResult:
    """Poisson intensity whose attempt rate matches the budget.

    The rate increases with the intensity (checked on the bracket); if even
    gamma_max cannot spend the budget the result is returned saturated.
    """
    cfg = cfg or SolverConfig()
    if budget < 0:
        raise ValueError(f"budget must be nonnegative, got {budget}")

    def at(gamma: float) -> EvalResult:
        return evaluate_policy(g, ch, PsPolicy(gamma=gamma))

    if budget == 0.0:
        # never sampling: R = 0 exactly, and the sync chain has no unique
        # stationary law, so there is no meaningful evaluation to attach
        return ConstrainedResult(policy=PsPolicy(gamma=0.0), result=None,
                                 rate_tolerance=cfg.eps_lambda)
    ev_max = at(cfg.gamma_max)
    if ev_max.rate <= 0.0:  # rate grows from R(0) = 0
        raise OptimizeError("attempt rate is not increasing on the intensity bracket")
    if ev_max.rate <= budget:
        return ConstrainedResult(policy=PsPolicy(gamma=cfg.gamma_max), result=ev_max,
                                 rate_tolerance=cfg.eps_lambda, saturated=True)
    lo, hi = 0.0, cfg.gamma_max
    ev = ev_max
    gamma_mid = hi
    for _ in range(cfg.max_bisect_iterations):
        gamma_mid = 0.5 * (lo + hi)
        ev = at(gamma_mid)
        if abs(ev.rate - budget) <= cfg.eps_lambda:
            break
        if ev.rate >= budget:
            hi = gamma_mid
        else:
            lo = gamma_mid
    return ConstrainedResult(policy=PsPolicy(gamma=gamma_mid), result=ev,
                             rate_tolerance=cfg.eps_lambda)


@dataclass(frozen=True)
class OptimizeOutcome:
    """Uniform wrapper over the four family optimizers, with wall time."""

    family: str
    constrained: ConstrainedResult
    wall_time_s: float


def optimize(
    g: Generator, ch: Channel, family: str, budget: float,
    cfg: SolverConfig | None = None,
) -> OptimizeOutcome:
    """Optimize one policy family against a sampling budget."""
    cfg = cfg or SolverConfig()
    start = time.perf_counter()
    if family in ("esat", "eat"):
        res = lagrangian_bisection(g, ch, budget, family, cfg)
    elif family == "st":
        res = st_bisection(g, ch, budget, cfg)
    elif family == "ps":
        res = ps_rate_match(g, ch, budget, cfg)
    else:
        raise ValueError(f"unknown family {family!r}; expected esat/eat/st/ps")
    return OptimizeOutcome(family=family, constrained=res,
                           wall_time_s=time.perf_counter() - start)

"""Event-driven Monte Carlo of the source/monitor pair under any policy.

The simulation runs in regenerative cycles delimited by sync points. Within
a cycle the age grows at unit slope from the desync instant, so threshold
crossings are deterministic events computed in closed form and the age area
of a cycle is exactly half the squared excursion length; no time stepping
is involved anywhere. Estimates are ratio estimators over all cycles, with
standard errors from the delta method over true regeneration blocks
(returns of the sync value to its initial state), which respects the Markov
dependence between consecutive cycle types.

Reproducibility: a single PCG64 stream drives everything, exponential
variates are generated by inverse transform, and the event order is fixed,
so a (config, seed) pair determines the output bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ctmc import Channel, Generator
from .optimizer import EatPolicy, EsatPolicy, Policy, PsPolicy, StPolicy


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: source, channel, policy, cycle count, seed."""

    source: Generator
    channel: Channel
    policy: Policy
    cycles: int
    seed: int

    def __post_init__(self):
        if self.cycles < 1:
            raise ValueError(f"need at least one cycle, got {self.cycles}")


@dataclass(frozen=True)
class SimResult:
    """Ratio estimates with regenerative standard errors."""

    maoii_hat: float
    rate_hat: float
    stderr_maoii: float
    stderr_rate: float
    cycle_count: int


@dataclass(frozen=True)
class CycleRecord:
    """Per-cycle trace row for audits."""

    index: int
    sync_value: int
    hold_time: float
    excursion: float
    area: float
    attempts: int
    next_sync: int


def _threshold_matrix(policy: Policy, n: int) -> np.ndarray | None:
    if isinstance(policy, EsatPolicy):
        if policy.thresholds.shape != (n, n):
            raise ValueError("threshold matrix shape does not match the source")
        return np.asarray(policy.thresholds, dtype=float)
    if isinstance(policy, EatPolicy):
        if policy.taus.shape != (n,):
            raise ValueError("threshold vector length does not match the source")
        return np.repeat(np.asarray(policy.taus, dtype=float)[:, None], n, axis=1)
    if isinstance(policy, StPolicy):
        return np.full((n, n), float(policy.tau))
    if isinstance(policy, PsPolicy):
        return None
    raise TypeError(f"unknown policy type {type(policy).__name__}")


class _Exp:
    """Inverse-transform exponential variates from one uniform stream."""

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def draw(self, rate: float) -> float:
        if rate <= 0.0:
            return math.inf
        return -math.log1p(-self._rng.random()) / rate

    def uniform(self) -> float:
        return self._rng.random()


def simulate(cfg: SimConfig) -> SimResult:
    """Run the configured number of cycles and return the estimates."""
    result, _, _ = _run(cfg, want_cycles=False, want_events=False)
    return result


def simulate_detailed(
    cfg: SimConfig, event_log: bool = False
) -> tuple[SimResult, list[CycleRecord], list[tuple[float, str, int]]]:
    """Like :func:`simulate`, also returning per-cycle records and, when
    requested, a global (time, kind, state) event log for replay audits."""
    return _run(cfg, want_cycles=True, want_events=event_log)


def _run(cfg: SimConfig, want_cycles: bool, want_events: bool):
    g, ch, policy = cfg.source, cfg.channel, cfg.policy
    n = g.n
    sigma = g.sigmas
    rho_cum = np.cumsum(np.delete(g.q, np.arange(n) * (n + 1)).reshape(n, n - 1)
                        / sigma[:, None], axis=1)
    targets = np.array([[i for i in range(n) if i != row] for row in range(n)])
    tau = _threshold_matrix(policy, n)
    ps_gamma = policy.gamma if isinstance(policy, PsPolicy) else None
    if ps_gamma is not None and ps_gamma < 0:
        raise ValueError("sampling intensity must be nonnegative")

    rng = _Exp(np.random.Generator(np.random.PCG64(cfg.seed)))
    events: list[tuple[float, str, int]] = []
    records: list[CycleRecord] = []

    def pick_target(state: int) -> int:
        u = rng.uniform()
        k = int(np.searchsorted(rho_cum[state], u))
        if k >= n - 1:
            k = n - 2
        return int(targets[state, k])

    sum_a = 0.0
    sum_d = 0.0
    sum_c = 0.0
    # regeneration blocks: cycles between returns of the sync value to its start
    block_sums: list[tuple[float, float, float]] = []
    cur_block = np.zeros(3)
    sync = 0
    regen_state = sync
    now = 0.0

    for cycle_idx in range(cfg.cycles):
        hold = rng.draw(sigma[sync])
        now += hold
        state = pick_target(sync)
        if want_events:
            events.append((now, "desync", state))
        # out-of-sync excursion; age equals time since desync
        t = 0.0
        attempts = 0
        transmitting = False
        t_done = math.inf
        t_sample = math.inf
        if ps_gamma is not None:
            t_sample = rng.draw(ps_gamma)
        else:
            thr = tau[sync, state]
            if thr <= 0.0:
                attempts += 1
                transmitting = True
                t_done = rng.draw(ch.mu)
                if want_events:
                    events.append((now, "tx_start", state))
        next_sync = -1
        while True:
            t_leave = t + rng.draw(sigma[state])
            # deterministic threshold crossing inside this sojourn
            while True:
                if ps_gamma is not None:
                    if t_sample < min(t_leave, t_done):
                        attempts += 1
                        if not transmitting:
                            transmitting = True
                            t_done = t_sample + rng.draw(ch.mu)
                            if want_events:
                                events.append((now + t_sample, "tx_start", state))
                        t_sample += rng.draw(ps_gamma)
                        continue
                elif not transmitting:
                    thr = tau[sync, state]
                    if t < thr <= t_leave:
                        attempts += 1
                        transmitting = True
                        t_done = thr + rng.draw(ch.mu)
                        if want_events:
                            events.append((now + thr, "tx_start", state))
                        continue
                break
            if transmitting and t_done < t_leave:
                next_sync = state
                t = t_done
                if want_events:
                    events.append((now + t, "delivered", state))
                break
            t = t_leave
            nxt = pick_target(state)
            if want_events:
                events.append((now + t, "jump", nxt))
            if transmitting and want_events:
                events.append((now + t, "preempt", state))
            if nxt == sync:
                next_sync = sync
                break
            state = nxt
            transmitting = False
            t_done = math.inf
            if ps_gamma is None:
                thr = tau[sync, state]
                if thr <= t:
                    attempts += 1
                    transmitting = True
                    t_done = t + rng.draw(ch.mu)
                    if want_events:
                        events.append((now + t, "tx_start", state))

        now += t
        area = 0.5 * t * t
        duration = hold + t
        sum_a += area
        sum_d += duration
        sum_c += attempts
        cur_block += (area, duration, attempts)
        if want_cycles:
            records.append(CycleRecord(
                index=cycle_idx, sync_value=sync, hold_time=hold, excursion=t,
                area=area, attempts=attempts, next_sync=next_sync,
            ))
        if want_events:
            events.append((now, "sync", next_sync))
        sync = next_sync
        if sync == regen_state:
            block_sums.append(tuple(cur_block))
            cur_block = np.zeros(3)

    maoii_hat = sum_a / sum_d
    rate_hat = sum_c / sum_d
    se_maoii, se_rate = _regenerative_stderr(block_sums, maoii_hat, rate_hat)
    result = SimResult(
        maoii_hat=maoii_hat,
        rate_hat=rate_hat,
        stderr_maoii=se_maoii,
        stderr_rate=se_rate,
        cycle_count=cfg.cycles,
    )
    return result, records, events


def _regenerative_stderr(
    blocks: list[tuple[float, float, float]], maoii_hat: float, rate_hat: float
) -> tuple[float, float]:
    """Delta-method standard errors of the two ratio estimators over
    completed regeneration blocks. Infinite when fewer than two blocks
    completed."""
    if len(blocks) < 2:
        return math.inf, math.inf
    arr = np.asarray(blocks)
    nb = arr.shape[0]
    mean_d = arr[:, 1].mean()
    za = arr[:, 0] - maoii_hat * arr[:, 1]
    zc = arr[:, 2] - rate_hat * arr[:, 1]
    se_a = math.sqrt(za.var(ddof=1) / nb) / mean_d
    se_c = math.sqrt(zc.var(ddof=1) / nb) / mean_d
    return se_a, se_c

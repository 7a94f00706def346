import numpy as np
import pytest

from aoii_ctmc import Channel, make_binary, make_symmetric, validate
from aoii_ctmc.cycles import CycleParams, binary_closed_form, eat_cycle, symmetric_closed_form
from aoii_ctmc.numerics import SingularMatrixError
from aoii_ctmc.optimizer import (
    EatPolicy,
    EsatGridTable,
    EsatPolicy,
    GridCapError,
    SolverConfig,
    StPolicy,
    evaluate_policy,
    improve_eat,
    improve_esat,
    lagrangian_bisection,
    policy_iteration,
    ps_rate_match,
    st_bisection,
    steady_state,
    value_determination,
)

from .conftest import random_generator
from .oracles import power_iteration_stationary

FAST = SolverConfig(tau_max=6.0, delta_tau=0.1)


class TestSteadyState:
    def test_doubly_stochastic_is_uniform(self):
        p = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
        np.testing.assert_allclose(steady_state(p), np.full(3, 1 / 3), atol=1e-12)

    def test_two_state_formula(self):
        p12, p21 = 0.3, 0.8
        pi = steady_state(np.array([[1 - p12, p12], [p21, 1 - p21]]))
        np.testing.assert_allclose(pi, [p21 / (p12 + p21), p12 / (p12 + p21)],
                                   rtol=1e-13)

    def test_matches_power_iteration(self):
        rng = np.random.default_rng(61)
        p = rng.uniform(0.05, 1.0, size=(6, 6))
        p /= p.sum(axis=1, keepdims=True)
        pi = steady_state(p)
        np.testing.assert_allclose(pi, power_iteration_stationary(p), atol=1e-9)
        assert pi.min() >= -1e-10
        np.testing.assert_allclose(pi @ p, pi, atol=1e-10)
        assert pi.sum() == pytest.approx(1.0, abs=1e-10)

    def test_reducible_rejected(self):
        with pytest.raises(SingularMatrixError):
            steady_state(np.eye(3))


class TestValueDetermination:
    def test_symmetric_cycles_have_flat_values(self):
        p = np.full((3, 3), 1 / 3)
        cycles = [CycleParams(d=2.0, a=1.5, c=0.5, p=p[j]) for j in range(3)]
        eta, values = value_determination(cycles, lam=2.0)
        assert eta == pytest.approx((1.5 + 2.0 * 0.5) / 2.0, rel=1e-12)
        np.testing.assert_allclose(values, 0.0, atol=1e-10)

    def test_eta_matches_stationary_ratio(self, ternary, channel):
        rng = np.random.default_rng(3)
        taus = rng.uniform(0, 2, size=3)
        cycles = [eat_cycle(ternary, channel, j, taus[j]) for j in range(3)]
        lam = 0.7
        eta, _ = value_determination(cycles, lam)
        pi = steady_state(np.vstack([c.p for c in cycles]))
        num = pi @ np.array([c.a + lam * c.c for c in cycles])
        den = pi @ np.array([c.d for c in cycles])
        assert eta == pytest.approx(num / den, rel=1e-9)

    def test_all_self_loops_rejected(self):
        cycles = [CycleParams(d=1.0, a=1.0, c=0.0, p=np.eye(2)[j]) for j in range(2)]
        with pytest.raises(SingularMatrixError):
            value_determination(cycles, 0.0)


class TestImproveEat:
    def test_zero_multiplier_transmits_immediately(self, ternary, channel):
        for j in range(3):
            assert improve_eat(ternary, channel, j, 0.0, np.zeros(3), FAST) == 0.0

    def test_huge_multiplier_hits_cap(self, ternary, channel):
        tau = improve_eat(ternary, channel, 0, 1e6, np.zeros(3), FAST)
        assert tau == pytest.approx(FAST.tau_max)

    def test_matches_dense_grid_on_binary(self, channel):
        g = make_binary(0.6, 0.75)
        cfg = SolverConfig(tau_max=8.0)
        lam = 1.5
        # mid-run relative values from one evaluation at a plausible policy
        cycles = [eat_cycle(g, channel, j, 0.5) for j in range(2)]
        _, values = value_determination(cycles, lam)
        for j in range(2):
            tau_star = improve_eat(g, channel, j, lam, values, cfg)
            grid = np.arange(0.0, 8.0 + 1e-9, 1e-3)
            objective = []
            for t in grid:
                cp = eat_cycle(g, channel, j, float(t))
                objective.append(
                    (cp.a + lam * cp.c + cp.p @ (values - values[j])) / cp.d
                )
            dense_best = grid[int(np.argmin(objective))]
            assert abs(tau_star - dense_best) <= 2e-3


class TestImproveEsat:
    def test_two_state_grid_matches_continuous(self, channel):
        g = make_binary(0.6, 0.75)
        cfg = SolverConfig(tau_max=6.0, delta_tau=0.05)
        lam = 1.0
        cycles = [eat_cycle(g, channel, j, 0.3) for j in range(2)]
        _, values = value_determination(cycles, lam)
        for j in range(2):
            taus = improve_esat(g, channel, j, lam, values, cfg)
            tau_cont = improve_eat(g, channel, j, lam, values, cfg)
            other = 1 - j
            assert abs(taus[other] - tau_cont) <= cfg.delta_tau

    def test_zero_multiplier_returns_zeros(self, ternary, channel):
        taus = improve_esat(ternary, channel, 0, 0.0, np.zeros(3), FAST)
        np.testing.assert_array_equal(taus, 0.0)

    def test_local_optimality_audit(self, ternary, channel):
        cfg = FAST
        lam = 1.0
        table = EsatGridTable(ternary, channel, 1, cfg)
        cycles = [eat_cycle(ternary, channel, j, 0.4) for j in range(3)]
        _, values = value_determination(cycles, lam)
        taus = table.improve(lam, values)

        def objective(tv):
            cp = table.lookup(tv)
            return (cp.a + lam * cp.c + cp.p @ (values - values[1])) / cp.d

        best = objective(taus)
        step = cfg.delta_tau
        for i in (0, 2):
            for delta in (-step, step):
                neighbor = taus.copy()
                neighbor[i] += delta
                if neighbor[i] < -1e-12 or neighbor[i] > cfg.tau_max + 1e-12:
                    continue
                neighbor[i] = min(max(neighbor[i], 0.0), cfg.tau_max)
                assert best <= objective(neighbor) + 1e-12


class TestPolicyIteration:
    def test_zero_multiplier_converges_fast(self, ternary, channel):
        pol, rep = policy_iteration(ternary, channel, 0.0, "eat", FAST)
        assert rep.converged
        assert rep.iterations <= 2
        np.testing.assert_array_equal(pol.taus, 0.0)

    def test_symmetric_source_gets_equal_thresholds(self, channel):
        g = make_symmetric(4, 1.0)
        pol, rep = policy_iteration(g, channel, 2.0, "eat", FAST)
        assert rep.converged
        assert np.ptp(pol.taus) < 1e-6

    def test_eta_trace_nonincreasing(self, ternary, channel):
        for lam in (0.5, 2.0):
            _, rep = policy_iteration(ternary, channel, lam, "eat", FAST)
            diffs = np.diff(rep.eta_trace)
            assert np.all(diffs <= 1e-9)

    def test_binary_esat_equals_eat(self, channel):
        g = make_binary(0.6, 0.75)
        cfg = SolverConfig(tau_max=6.0, delta_tau=0.05)
        lam = 1.2
        pol_e, _ = policy_iteration(g, channel, lam, "eat", cfg)
        pol_s, _ = policy_iteration(g, channel, lam, "esat", cfg)
        t_eat = np.array([pol_e.taus[0], pol_e.taus[1]])
        t_esat = np.array([pol_s.thresholds[0, 1], pol_s.thresholds[1, 0]])
        assert np.abs(t_eat - t_esat).max() <= cfg.delta_tau


class TestLagrangianBisection:
    def test_generous_budget_returns_unconstrained(self, ternary, channel):
        res = lagrangian_bisection(ternary, channel, 10.0, "eat", FAST)
        assert res.lambda_star == 0.0
        np.testing.assert_array_equal(res.policy.taus, 0.0)
        assert res.result.rate <= 10.0

    def test_tiny_budget_pushes_thresholds_up(self, ternary, channel):
        cfg = SolverConfig()
        res = lagrangian_bisection(ternary, channel, 5e-3, "eat", cfg)
        assert abs(res.result.rate - 5e-3) <= res.rate_tolerance
        assert res.policy.taus.max() > 0.3 * cfg.tau_max

    def test_budget_below_threshold_range_is_infeasible(self, ternary, channel):
        from aoii_ctmc.optimizer import InfeasibleBudgetError

        with pytest.raises(InfeasibleBudgetError):
            lagrangian_bisection(ternary, channel, 1e-6, "eat", FAST)

    def test_ternary_budget_quarter(self, ternary, channel):
        res = lagrangian_bisection(ternary, channel, 0.25, "eat", SolverConfig())
        recheck = evaluate_policy(ternary, channel, res.policy)
        assert abs(recheck.rate - 0.25) <= res.rate_tolerance
        assert recheck.maoii == pytest.approx(res.result.maoii, rel=1e-12)

    def test_rate_nonincreasing_in_multiplier(self, ternary, channel):
        rates = []
        for lam in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0):
            pol, _ = policy_iteration(ternary, channel, lam, "eat", FAST)
            rates.append(evaluate_policy(ternary, channel, pol).rate)
        assert np.all(np.diff(rates) <= 1e-9)


class TestStBisection:
    def test_zero_threshold_when_budget_loose(self, ternary, channel):
        res = st_bisection(ternary, channel, 5.0, FAST)
        assert res.policy.tau == 0.0

    def test_symmetric_budget_ordering(self, channel):
        g = make_symmetric(20, 1.0)
        loose = st_bisection(g, channel, 0.4, SolverConfig(tau_max=60.0))
        tight = st_bisection(g, channel, 0.25, SolverConfig(tau_max=60.0))
        assert loose.policy.tau < tight.policy.tau
        assert abs(loose.result.rate - 0.4) <= 1e-3
        assert abs(tight.result.rate - 0.25) <= 1e-3

    def test_binary_matches_dense_scan(self, channel):
        g = make_binary(0.6, 0.75)
        budget = 0.3
        res = st_bisection(g, channel, budget, SolverConfig(tau_max=20.0))
        taus = np.arange(0.0, 20.0, 1e-4)
        rates = np.array([binary_closed_form(0.6, 0.75, 1.0, t, t).rate for t in taus])
        scan_tau = taus[int(np.argmin(np.abs(rates - budget)))]
        assert abs(res.policy.tau - scan_tau) <= 1e-3


class TestPsRateMatch:
    def test_budget_match(self, ternary, channel):
        res = ps_rate_match(ternary, channel, 0.25, FAST)
        assert abs(res.result.rate - 0.25) <= 1e-3
        assert not res.saturated

    def test_zero_budget(self, ternary, channel):
        res = ps_rate_match(ternary, channel, 0.0, FAST)
        assert res.policy.gamma == 0.0
        assert res.result is None

    def test_saturation_flag(self, ternary, channel):
        res = ps_rate_match(ternary, channel, 0.2,
                            SolverConfig(gamma_max=1e-4))
        assert res.saturated
        assert res.policy.gamma == 1e-4


class TestEvaluatePolicy:
    def test_st_matches_symmetric_closed_form(self, channel):
        g = make_symmetric(6, 0.8)
        ev = evaluate_policy(g, channel, StPolicy(tau=0.9))
        maoii, rate = symmetric_closed_form(6, 0.8, 1.0, 0.9)
        assert ev.maoii == pytest.approx(maoii, rel=1e-9)
        assert ev.rate == pytest.approx(rate, rel=1e-9)
        np.testing.assert_allclose(ev.pi, 1 / 6, atol=1e-10)

    def test_eat_matches_binary_closed_form(self, channel):
        g = make_binary(1.2, 0.4)
        ref = binary_closed_form(1.2, 0.4, 1.0, 0.7, 0.2)
        ev = evaluate_policy(g, channel, EatPolicy(taus=np.array([0.7, 0.2])))
        assert ev.maoii == pytest.approx(ref.maoii, rel=1e-9)
        assert ev.rate == pytest.approx(ref.rate, rel=1e-9)

    def test_st_maoii_nondecreasing_in_tau(self, channel):
        g = make_symmetric(20, 1.0)
        maoiis = [evaluate_policy(g, channel, StPolicy(tau=t)).maoii
                  for t in np.linspace(0, 5, 21)]
        assert np.all(np.diff(maoiis) >= -1e-12)

    def test_esat_policy_dispatch(self, ternary, channel):
        thresholds = np.array([[0.0, 0.5, 1.0], [0.2, 0.0, 0.4], [0.0, 0.0, 0.0]])
        ev = evaluate_policy(ternary, channel, EsatPolicy(thresholds=thresholds))
        assert ev.rate > 0
        assert ev.pi.sum() == pytest.approx(1.0, abs=1e-10)


def test_grid_cap_refusal(channel):
    rng = np.random.default_rng(9)
    g = validate(random_generator(rng, 10))
    with pytest.raises(GridCapError, match="201"):
        EsatGridTable(g, channel, 0, SolverConfig())

"""
矩阵博弈探索分析测试
"""
import math

import numpy as np
import pytest

from core.analysis import (
    agent_one_payoff,
    coupon_collector_expectation,
    coverage_table,
    coverage_times,
    discovery_table,
    discovery_times,
    simulate_coverage,
    simulate_restricted_discovery,
)
from core.exceptions import ContractViolation


class TestCoverage:
    """共享目标 vs 无协调的覆盖时间"""

    @pytest.mark.parametrize("l", range(2, 11))
    def test_shared_goals_take_exactly_m_steps(self, l, rng):
        times = coverage_times(l, shared=True, trials=200, rng=rng)
        assert np.all(times == l * l)

    def test_closed_form(self):
        assert coupon_collector_expectation(4) == pytest.approx(8.3333, abs=1e-4)
        assert coupon_collector_expectation(9) == pytest.approx(25.4607, abs=1e-4)

    @pytest.mark.parametrize("l,expected", [(2, 8.333), (3, 25.461)])
    def test_non_shared_mean(self, l, expected, rng):
        mean = simulate_coverage(l, shared=False, trials=100_000, rng=rng)
        assert mean == pytest.approx(expected, rel=0.02)

    @pytest.mark.parametrize("l", [2, 3, 4, 5])
    def test_within_three_standard_errors(self, l):
        times = coverage_times(l, shared=False, trials=20_000, rng=np.random.default_rng(l))
        stderr = times.std(ddof=1) / math.sqrt(times.size)
        assert abs(times.mean() - coupon_collector_expectation(l * l)) < 3 * stderr

    def test_ratio_grows_with_m(self):
        rows = coverage_table(range(2, 11), trials=2_000, seed=1)
        ratios = [row.ratio for row in rows]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))
        assert all(row.shared_mean == row.m for row in rows)

    def test_invalid_arguments(self, rng):
        with pytest.raises(ContractViolation):
            coverage_times(1, shared=False, trials=10, rng=rng)


class TestRestrictedDiscovery:
    """受限空间上的发现时间"""

    @pytest.mark.parametrize("l", range(2, 8))
    def test_sub_mode_within_two_l(self, l, rng):
        payoff = agent_one_payoff(l, best_action=l - 1)
        times = discovery_times(l, "sub", 500, rng, payoff=payoff)
        assert times.max() <= 2 * l
        assert times.min() >= 1

    def test_small_game_found_within_four_steps(self, rng):
        times = discovery_times(2, "sub", 1000, rng, payoff=agent_one_payoff(2, best_action=0))
        assert times.max() <= 4

    @pytest.mark.parametrize("l", range(2, 8))
    def test_adversarial_full_mode(self, l, rng):
        times = discovery_times(l, "full", 50, rng, order="adversarial")
        assert np.all(times == l * l - l + 1)

    def test_random_full_mode_never_worse_than_adversarial(self, rng):
        mean = simulate_restricted_discovery(4, "full", 2_000, rng, order="random")
        assert 1 <= mean <= 4 * 4 - 4 + 1

    def test_payoff_must_depend_on_agent_one(self, rng):
        with pytest.raises(ContractViolation):
            discovery_times(2, "sub", 1, rng, payoff=np.eye(2))

    def test_unique_maximum_required(self, rng):
        with pytest.raises(ContractViolation):
            discovery_times(2, "sub", 1, rng, payoff=np.ones((2, 2)))

    def test_unknown_mode(self, rng):
        with pytest.raises(ContractViolation):
            discovery_times(3, "joint", 1, rng)

    def test_table(self):
        rows = discovery_table([2, 3, 4], trials=200)
        for row in rows:
            assert row.sub_max <= row.sub_bound
            assert row.full_adversarial == row.full_bound

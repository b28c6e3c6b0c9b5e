"""
访问计数器与哈希离散化测试
"""
from collections import Counter

import numpy as np
import pytest

from core.counting import HashDiscretizer, VisitCounter, format_key, parse_key
from core.exceptions import ContractViolation, RejectedInputError, UndefinedDistributionError


class TestVisitCounter:
    """计数与经验分布"""

    def test_first_increment(self):
        counter = VisitCounter().increment((3, 7))
        assert counter.count((3, 7)) == 1
        assert counter.support_size == 1
        assert counter.total == 1

    def test_probability(self):
        counter = VisitCounter().increment("a").increment("a").increment("b")
        assert counter.probability("a") == pytest.approx(2 / 3)
        assert counter.probability("missing") == 0.0

    def test_counts_three_to_one(self):
        counter = VisitCounter.from_keys(["x", "x", "x", "y"])
        assert counter.probability("x") == 0.75
        assert counter.probability("y") == 0.25

    def test_empty_counter_has_no_distribution(self):
        with pytest.raises(UndefinedDistributionError):
            VisitCounter().probability("a")
        with pytest.raises(UndefinedDistributionError):
            VisitCounter().probabilities()

    def test_matches_brute_force_tally(self, rng):
        keys = [tuple(int(v) for v in row) for row in rng.integers(0, 6, size=(1000, 2))]
        counter = VisitCounter()
        for key in keys:
            counter.increment(key)
        expected = Counter(keys)
        assert counter.table == dict(expected)
        assert counter.total == 1000
        assert counter.support_size == len(expected)
        for key, n in expected.items():
            assert counter.probability(key) == n / 1000
        assert counter == VisitCounter.from_keys(keys)

    def test_dump_and_load(self, tmp_path):
        counter = VisitCounter.from_keys([(1, 2), (1, 2), (0, 5), (3,)])
        path = counter.dump(tmp_path / "visits" / "space_0_1.tsv")
        assert path.read_text(encoding="utf-8").splitlines()[0] == "0,5\t1"
        assert VisitCounter.load(path) == counter

    def test_key_format(self):
        assert format_key((3, 7)) == "3,7"
        assert format_key(12) == "#12"
        assert parse_key("3,7") == (3, 7)
        assert parse_key("#12") == 12


class TestHashDiscretizer:
    """箱宽取整后哈希"""

    def test_same_bin_same_key(self):
        phi = HashDiscretizer([1.0])
        assert phi.discretize([0.3]) == phi.discretize([0.7])

    def test_adjacent_bins_differ(self):
        phi = HashDiscretizer([1.0])
        assert phi.discretize([0.3]) != phi.discretize([1.3])

    def test_non_finite_rejected(self):
        phi = HashDiscretizer([1.0, 1.0])
        with pytest.raises(RejectedInputError):
            phi.discretize([0.0, float("nan")])
        with pytest.raises(RejectedInputError):
            phi.discretize([float("inf"), 0.0])

    def test_wrong_length(self):
        with pytest.raises(ContractViolation):
            HashDiscretizer([1.0, 1.0]).discretize([0.5])

    def test_invalid_widths(self):
        with pytest.raises(ContractViolation):
            HashDiscretizer([0.0])

    def test_keys_follow_floored_bins(self, rng):
        phi = HashDiscretizer([0.5, 0.5])
        points = rng.uniform(-20.0, 20.0, size=(100_000, 2))
        bins = np.floor(points / 0.5).astype(np.int64)
        keys = {}
        for point, row in zip(points, bins):
            cell = tuple(int(v) for v in row)
            key = phi.discretize(point)
            assert key == phi.hash_bins(cell)
            keys.setdefault(cell, key)
        # 同一格子同一个键，不同格子之间无碰撞
        assert len(set(keys.values())) == len(keys)

    def test_restricted_hash_depends_on_space(self):
        phi = HashDiscretizer.uniform(3, 1.0)
        a = phi.restricted((0,))
        b = phi.restricted((1,))
        assert a.bin_widths == (1.0,)
        assert a.discretize([2.0]) != b.discretize([2.0])

    def test_deterministic_across_instances(self):
        assert HashDiscretizer([1.0, 2.0], salt=9).discretize([3.5, 4.1]) == \
            HashDiscretizer([1.0, 2.0], salt=9).discretize([3.5, 4.1])

#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""测试有限维分布期望与增量上界"""
import sys
from pathlib import Path

import numpy as np
import pytest

# 添加 src 目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from fellerpy.distributions import (Distribution, bound_grid, euphoria_bound, expected_lv,
                                    expected_truncated_distance, fdd_expectation, marginal)
from fellerpy.exceptions import (DimensionMismatch, DistributionError, InvalidHorizon,
                                 TimeOrder, UnsortedTimes)
from fellerpy.metricspace import FiniteMetricSpace, random_metric_space, truncate_metric
from fellerpy.paths import canonical_partition
from fellerpy.semigroup import Generator, SemigroupFamily

from test_utils import (brute_force_fdd, random_distribution, random_generator, two_state_family,
                        two_state_kernel)


@pytest.fixture
def discrete2():
    return truncate_metric(FiniteMetricSpace.discrete(2))


class TestDistribution:

    def test_point_mass_and_uniform(self):
        np.testing.assert_array_equal(Distribution.point_mass(3, 1).gamma, [0, 1, 0])
        np.testing.assert_allclose(Distribution.uniform(4).gamma, 0.25)

    def test_negative(self):
        with pytest.raises(DistributionError, match="state 1"):
            Distribution([1.2, -0.2])

    def test_sum(self):
        with pytest.raises(DistributionError):
            Distribution([0.5, 0.4])


class TestFddExpectation:

    def test_single_time_indicator(self):
        fam = two_state_family()
        value = fdd_expectation(Distribution.point_mass(2, 0), fam, [0.5], lambda x: float(x == 1))
        assert value == pytest.approx(0.3160603, abs=1e-7)

    def test_two_times_tensor(self):
        fam = two_state_family()
        gamma = Distribution.point_mass(2, 0)
        phi = np.array([[0.0, 1.0], [1.0, 0.0]])
        # P(B_0.5 != B_1.0) = 2 p (1 - p) 的期望，其中 B_0.5 的分布来自 Q_0.5
        q = two_state_kernel(0.5)
        expected = q[0, 0] * q[0, 1] + q[0, 1] * q[1, 0]
        assert fdd_expectation(gamma, fam, [0.5, 1.0], phi) == pytest.approx(expected, abs=1e-14)

    def test_equal_times_allowed(self):
        fam = two_state_family()
        gamma = Distribution.uniform(2)
        assert fdd_expectation(gamma, fam, [0.3, 0.3], lambda x, y: float(x != y)) == pytest.approx(
            0.0, abs=1e-15)

    def test_unsorted(self):
        with pytest.raises(UnsortedTimes):
            fdd_expectation(Distribution.uniform(2), two_state_family(), [0.5, 0.2],
                            lambda x, y: 1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fdd_expectation(Distribution.uniform(3), two_state_family(), [0.5], lambda x: 1.0)
        with pytest.raises(DimensionMismatch):
            fdd_expectation(Distribution.uniform(2), two_state_family(), [0.5], np.ones(3))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            n = int(rng.integers(2, 5))
            k = int(rng.integers(1, 4))
            fam = SemigroupFamily(random_generator(n, rng))
            gamma = random_distribution(n, rng)
            times = np.sort(rng.uniform(0, 2, size=k))
            tensor = rng.normal(size=(n, ) * k)
            gaps = np.diff(np.concatenate([[0.0], times]))
            kernels = [fam.kernel_at(g).q for g in gaps]
            oracle = brute_force_fdd(gamma.gamma, kernels, lambda *xs: tensor[xs])
            assert fdd_expectation(gamma, fam, times, tensor) == pytest.approx(oracle, abs=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_intermediate_time_with_unit_factor(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 5))
        fam = SemigroupFamily(random_generator(n, rng))
        gamma = random_distribution(n, rng)
        t1, t2, t3 = np.sort(rng.uniform(0, 2, size=3))
        phi1, phi3 = rng.normal(size=(2, n))
        outer = np.multiply.outer(phi1, phi3)
        inserted = np.einsum("a,b,c->abc", phi1, np.ones(n), phi3)
        assert fdd_expectation(gamma, fam, [t1, t2, t3], inserted) == pytest.approx(
            fdd_expectation(gamma, fam, [t1, t3], outer), abs=1e-12)

    def test_marginal(self):
        p = marginal(Distribution.point_mass(2, 0), two_state_family(), 0.5)
        np.testing.assert_allclose(p.gamma, [0.6839397, 0.3160603], atol=1e-7)


class TestIncrementBound:

    def test_reference_value(self, discrete2):
        fam = two_state_family()
        gamma = Distribution.point_mass(2, 0)
        value = expected_truncated_distance(gamma, fam, 0.0, 0.5, discrete2)
        assert value == pytest.approx((1 - np.exp(-1)) / 2, abs=1e-12)
        bounds = euphoria_bound(fam, 1.0, discrete2)
        assert bounds.m_t == pytest.approx(2 * np.exp(2))
        assert bounds.k == pytest.approx(bounds.m_t)
        assert bounds.m_t * 0.5 == pytest.approx(7.389056, abs=1e-6)

    def test_time_order(self, discrete2):
        with pytest.raises(TimeOrder):
            expected_truncated_distance(Distribution.uniform(2), two_state_family(), 0.6, 0.5,
                                        discrete2)

    def test_equal_times_zero(self, discrete2):
        assert expected_truncated_distance(Distribution.uniform(2), two_state_family(), 0.4, 0.4,
                                           discrete2) == 0.0

    def test_invalid_horizon(self, discrete2):
        with pytest.raises(InvalidHorizon):
            euphoria_bound(two_state_family(), 0.0, discrete2)

    def test_zero_generator(self):
        fam = SemigroupFamily(Generator.zero(3))
        tm = truncate_metric(FiniteMetricSpace.discrete(3))
        bounds, grid, worst = bound_grid(Distribution.uniform(3), fam, tm, 1.0, grid_size=10)
        assert bounds.m_t == 0.0
        assert (grid["expectation"] == 0).all()
        assert worst == 0.0

    def test_reference_grid(self, discrete2):
        bounds, grid, worst = bound_grid(Distribution.point_mass(2, 0), two_state_family(),
                                         discrete2, 1.0, grid_size=50)
        assert set(grid.columns) == {"s", "t", "expectation", "bound", "ratio"}
        assert (grid["expectation"] <= grid["bound"] + 1e-12).all()
        assert 0 < worst < 1

    def test_random_instances(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            fam = SemigroupFamily(random_generator(n, rng))
            tm = truncate_metric(random_metric_space(n, rng))
            _, grid, _ = bound_grid(random_distribution(n, rng), fam, tm, 1.0, grid_size=50)
            assert (grid["expectation"] <= grid["bound"] + 1e-12).all()


class TestExpectedVariation:

    def test_linearity(self, discrete2):
        fam = two_state_family()
        gamma = Distribution.point_mass(2, 0)
        points = [0.0, 0.25, 0.5]
        total = expected_lv(gamma, fam, points, discrete2)
        parts = sum(expected_truncated_distance(gamma, fam, a, b, discrete2)
                    for a, b in zip(points, points[1:]))
        assert total == pytest.approx(parts, abs=1e-15)

    @pytest.mark.parametrize("k", [1, 3, 10, 30])
    def test_bounded_by_k_times_length(self, discrete2, k):
        fam = two_state_family()
        bounds = euphoria_bound(fam, 1.0, discrete2)
        partition = canonical_partition("3/2", k)
        value = expected_lv(Distribution.uniform(2), fam, partition.as_floats(), discrete2)
        assert value <= bounds.k * 1.5 + 1e-10

    def test_expected_jump_count_limit(self, discrete2):
        # 离散度量下 E[LV] 随加细趋于期望跳跃次数 (rate 1 × 时长 1)
        fam = two_state_family()
        value = expected_lv(Distribution.uniform(2), fam, canonical_partition(1, 50).as_floats(),
                            discrete2)
        assert value == pytest.approx(1.0, rel=0.05)
        assert value < 1.0

#!/usr/bin/env python
# -*- coding: utf-8 -*-
"""测试有理划分、路径求值、模拟与污染"""
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

# 添加 src 目录到路径
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from fellerpy.distributions import Distribution, expected_truncated_distance, marginal
from fellerpy.exceptions import DimensionMismatch, InvalidHorizon, OutOfHorizon
from fellerpy.metricspace import random_metric_space, truncate_metric
from fellerpy.paths import (CorruptedPath, DenominatorPath, EventPath, GridPath,
                            RationalPartition, canonical_partition, corrupt, corrupt_ensemble,
                            empirical_marginal, eval_at, farey_sequence, grid_sample,
                            read_corruptions_csv, read_partition, read_path_csv, resolve_workers,
                            simulate_ctmc, simulate_ensemble, write_corruptions_csv,
                            write_partition, write_path_csv)
from fellerpy.semigroup import Generator, SemigroupFamily

from test_utils import TWO_STATE_A, two_state_family


@pytest.fixture
def simple_path():
    return EventPath(0, ((0.3, 1), (0.7, 0)), 1.0, 2)


class TestRationalPartition:

    def test_mesh_and_membership(self):
        p = RationalPartition(["0", "1/3", "1/2", "2/3", "1"])
        assert p.mesh == Fraction(1, 3)
        assert Fraction(1, 2) in p
        assert len(p) == 5

    def test_must_increase(self):
        with pytest.raises(ValueError):
            RationalPartition([0, Fraction(1, 2), Fraction(1, 2), 1])

    def test_refine_and_subset(self):
        a = RationalPartition([0, Fraction(1, 2), 1])
        b = RationalPartition([0, Fraction(1, 3), 1])
        c = a.refine(b)
        assert a <= c and b <= c
        assert not c <= a
        assert c.points == (0, Fraction(1, 3), Fraction(1, 2), 1)

    def test_refine_interval_mismatch(self):
        with pytest.raises(ValueError):
            RationalPartition([0, 1]).refine(RationalPartition([0, 2]))

    def test_strings(self, tmp_path):
        p = canonical_partition("3/2", 4)
        write_partition(p, tmp_path / "partition.txt")
        assert read_partition(tmp_path / "partition.txt") == p
        assert p.to_strings()[-1] == "3/2"


class TestCanonicalPartition:

    def test_farey_five(self):
        assert [str(f) for f in farey_sequence(5)] == [
            "0", "1/5", "1/4", "1/3", "2/5", "1/2", "3/5", "2/3", "3/4", "4/5", "1"]

    def test_small_cases(self):
        assert canonical_partition(1, 1).points == (0, 1)
        assert canonical_partition(1, 2).points == (0, Fraction(1, 2), 1)
        assert canonical_partition(2, 2).points == (0, Fraction(1, 2), 1, Fraction(3, 2), 2)

    def test_non_integer_horizon_includes_T(self):
        p = canonical_partition("3/2", 1)
        assert p.points == (0, 1, Fraction(3, 2))
        assert p.mesh <= 1

    @pytest.mark.parametrize("horizon", ["1", "3/2", "7/3"])
    def test_chain_refines(self, horizon):
        previous = canonical_partition(horizon, 1)
        for k in range(2, 25):
            current = canonical_partition(horizon, k)
            assert previous <= current
            assert current.mesh <= 1
            previous = current

    def test_levels_recover_chain(self):
        finest = canonical_partition("3/2", 20)
        levels = finest.levels()
        for k in (1, 2, 5, 13):
            chosen = [p for p, level in zip(finest.points, levels) if level <= k]
            assert tuple(chosen) == canonical_partition("3/2", k).points

    def test_invalid(self):
        with pytest.raises(InvalidHorizon):
            canonical_partition(0, 3)
        with pytest.raises(ValueError):
            canonical_partition(1, 0)


class TestEventPath:

    def test_right_continuous(self, simple_path):
        assert simple_path.eval_at(0.0) == 0
        assert simple_path.eval_at(0.3) == 1
        assert simple_path.eval_at(0.3 - 1e-12) == 0
        assert simple_path.eval_at(0.7) == 0
        assert eval_at(simple_path, 0.5) == 1

    def test_out_of_horizon(self, simple_path):
        with pytest.raises(OutOfHorizon):
            simple_path.eval_at(1.5)
        with pytest.raises(IndexError):
            simple_path.eval_at(-0.1)

    def test_validation(self):
        with pytest.raises(ValueError):
            EventPath(0, ((0.5, 1), (0.4, 0)), 1.0, 2)
        with pytest.raises(ValueError):
            EventPath(0, ((0.5, 0), ), 1.0, 2)
        with pytest.raises(DimensionMismatch):
            EventPath(0, ((0.5, 3), ), 1.0, 2)

    def test_grid_sample(self, simple_path):
        gp = grid_sample(simple_path, canonical_partition(1, 3))
        # 0, 1/3, 1/2, 2/3, 1
        np.testing.assert_array_equal(gp.states, [0, 1, 1, 1, 0])
        assert gp.n_changes() == 2

    def test_grid_sample_matches_pointwise(self):
        path = simulate_ctmc(Generator(TWO_STATE_A * 5), Distribution.uniform(2), 2.0, seed=3)
        partition = canonical_partition(2, 15)
        expected = [path.eval_at(p) for p in partition.points]
        np.testing.assert_array_equal(grid_sample(path, partition).states, expected)

    def test_grid_path_shape(self):
        with pytest.raises(DimensionMismatch):
            GridPath(canonical_partition(1, 2), np.array([0, 1]))


class TestSimulation:

    def test_deterministic(self):
        gen, gamma = Generator(TWO_STATE_A), Distribution.uniform(2)
        assert simulate_ctmc(gen, gamma, 3.0, seed=42) == simulate_ctmc(gen, gamma, 3.0, seed=42)

    def test_zero_generator_never_jumps(self):
        path = simulate_ctmc(Generator.zero(3), Distribution.point_mass(3, 2), 10.0, seed=0)
        assert path.n_jumps() == 0
        assert path.eval_at(9.0) == 2

    def test_absorbing_state(self):
        gen = Generator(np.array([[-1.0, 1.0], [0.0, 0.0]]))
        path = simulate_ctmc(gen, Distribution.point_mass(2, 0), 50.0, seed=1)
        assert path.n_jumps() <= 1

    def test_invalid_horizon(self):
        with pytest.raises(InvalidHorizon):
            simulate_ctmc(Generator(TWO_STATE_A), Distribution.uniform(2), 0.0, seed=0)

    def test_ensemble_independent_of_workers(self):
        gen, gamma = Generator(TWO_STATE_A), Distribution.point_mass(2, 0)
        one = simulate_ensemble(gen, gamma, 1.0, 40, master_seed=9, workers=1)
        many = simulate_ensemble(gen, gamma, 1.0, 40, master_seed=9, workers=6)
        assert one == many

    def test_resolve_workers_env(self, monkeypatch):
        monkeypatch.setenv("FELLER_THREADS", "3")
        assert resolve_workers() == 3
        assert resolve_workers(5) == 5

    def test_marginal_within_standard_error(self):
        fam = two_state_family()
        gamma = Distribution.point_mass(2, 0)
        paths = simulate_ensemble(fam.gen, gamma, 1.0, 4000, master_seed=123)
        freq, se = empirical_marginal(paths, 0.5, 2)
        exact = marginal(gamma, fam, 0.5).gamma
        assert np.all(np.abs(freq - exact) <= 4 * se)

    def test_mean_jump_count(self):
        paths = simulate_ensemble(Generator(TWO_STATE_A), Distribution.uniform(2), 1.0, 4000, 77)
        jumps = np.array([p.n_jumps() for p in paths])
        # 每个状态的离开速率为 1，跳跃次数 ~ Poisson(1)
        assert abs(jumps.mean() - 1.0) <= 4 * jumps.std(ddof=1) / np.sqrt(len(jumps))


    def test_long_path_occupation(self):
        gen, gamma = Generator(TWO_STATE_A), Distribution.point_mass(2, 0)
        fractions = []
        for seed in range(8):
            path = simulate_ctmc(gen, gamma, 1000.0, seed=seed)
            edges = np.array([0.0] + [t for t, _ in path.jumps] + [path.horizon])
            states = np.array([path.initial_state] + [s for _, s in path.jumps])
            fractions.append(np.diff(edges)[states == 0].sum() / path.horizon)
        # 单条路径的标准差约 0.016
        assert np.all(np.abs(np.array(fractions) - 0.5) <= 0.08)
        assert abs(np.mean(fractions) - 0.5) <= 0.02

    @pytest.mark.parametrize("s, t", [(0.2, 0.7), (0.0, 0.3), (0.5, 1.5)])
    def test_increment_matches_expected_distance(self, s, t):
        rng = np.random.default_rng(5)
        fam = SemigroupFamily(Generator.random(3, rng))
        tm = truncate_metric(random_metric_space(3, rng))
        gamma = Distribution.uniform(3)
        paths = simulate_ensemble(fam.gen, gamma, 2.0, 4000, master_seed=31)
        d = np.array([tm.rho_tilde[p.eval_at(t), p.eval_at(s)] for p in paths])
        exact = expected_truncated_distance(gamma, fam, s, t, tm)
        assert abs(d.mean() - exact) <= 3 * d.std(ddof=1) / np.sqrt(len(d)) + 1e-12

class TestCorruption:

    def test_corrupted_values(self, simple_path):
        bad = corrupt(simple_path, 3, seed=5)
        assert len(bad.corruption_times) == 3
        for t, state in bad.corruptions:
            assert bad.eval_at(t) == state != simple_path.eval_at(t)
        # 污染时刻之外与原路径一致
        for t in (0.1, 0.35, 0.9):
            assert bad.eval_at(t) == simple_path.eval_at(t)

    def test_grid_consistent(self, simple_path):
        bad = CorruptedPath(simple_path, ((0.5, 0), ))
        partition = canonical_partition(1, 2)
        np.testing.assert_array_equal(bad.eval_grid(partition), [0, 0, 0])

    def test_rejects_bad_input(self, simple_path):
        with pytest.raises(ValueError):
            corrupt(simple_path, 0, seed=1)
        with pytest.raises(ValueError):
            CorruptedPath(simple_path, ((0.3, 0), ))
        with pytest.raises(ValueError):
            corrupt(EventPath(0, (), 1.0, 1), 1, seed=1)

    def test_ensemble_deterministic(self):
        paths = simulate_ensemble(Generator(TWO_STATE_A), Distribution.uniform(2), 1.0, 10, 4)
        assert corrupt_ensemble(paths, 2, 4, workers=1) == corrupt_ensemble(paths, 2, 4, workers=3)


class TestDenominatorPath:

    def test_values(self):
        path = DenominatorPath(64, 1.0)
        assert path.eval_at(Fraction(1, 3)) == 3
        assert path.eval_at(Fraction(2, 4)) == 2
        assert path.eval_at(0.25) == 4
        assert path.eval_at(np.pi / 4) == 0
        assert path.eval_at(Fraction(0)) == 1

    def test_grid(self):
        path = DenominatorPath(64, 1.0)
        gp = grid_sample(path, canonical_partition(1, 4))
        np.testing.assert_array_equal(gp.states, [1, 4, 3, 2, 3, 4, 1])


class TestCsv:

    def test_path_roundtrip(self, tmp_path, simple_path):
        write_path_csv(simple_path, tmp_path / "p.csv")
        assert (tmp_path / "p.csv").read_text().splitlines()[0] == "time,state"
        assert read_path_csv(tmp_path / "p.csv", 1.0, 2) == simple_path

    def test_corruptions_sidecar(self, tmp_path, simple_path):
        bad = corrupt(simple_path, 2, seed=8)
        write_corruptions_csv(bad, tmp_path / "p.corrupt.csv")
        assert read_corruptions_csv(simple_path, tmp_path / "p.corrupt.csv") == bad

    def test_bad_header(self, tmp_path):
        (tmp_path / "p.csv").write_text("t,s\n0.0,0\n")
        with pytest.raises(ValueError):
            read_path_csv(tmp_path / "p.csv", 1.0, 2)

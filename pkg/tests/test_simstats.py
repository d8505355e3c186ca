import numpy as np
import pytest
from pytest import approx, mark

from latentknn.errors import ConfigError, IndexOutOfRangeError, InsufficientOverlapError
from latentknn.obsdata import ObservationMatrix
from latentknn.simstats import (
    PairStatsTable,
    anchor_stats,
    candidate_rows,
    exclusion_mask,
    pair_stats,
    row_overlap,
    variance_u_statistic,
)
from latentknn.synthgen import NoiseSpec, mu_oracle, sigma_sq_oracle

from .conftest import random_matrix, synthetic

nan = np.nan


def test_overlap_intersection():
    obs = ObservationMatrix.from_dense(np.array([
        [1.0, 2.0, nan],
        [0.0, 1.0, 5.0],
    ]))
    assert row_overlap(obs, 0, 1).tolist() == [0, 1]


def test_self_overlap():
    row = np.full(9, nan)
    row[[3, 6]] = [1.0, 2.0]
    obs = ObservationMatrix.from_dense(np.vstack([row, row]))
    assert row_overlap(obs, 0, 0).tolist() == [3, 6]


@mark.parametrize("excluded", [
    np.array([False, True, False]),
    lambda j: j == 1,
])
def test_overlap_with_exclusion(excluded):
    obs = ObservationMatrix.from_dense(np.ones((2, 3)))
    assert row_overlap(obs, 0, 1, excluded).tolist() == [0, 2]


def test_exclusion_mask_shape_checked():
    with pytest.raises(ConfigError):
        exclusion_mask(np.zeros(4, dtype=bool), 3)


def test_overlap_index_error():
    with pytest.raises(IndexOutOfRangeError):
        row_overlap(ObservationMatrix.empty(2, 2), 0, 5)


def test_pair_stats_by_hand():
    obs = ObservationMatrix.from_dense(np.array([
        [1.0, 2.0, 3.0],
        [0.0, 1.0, 5.0],
    ]))
    stats = pair_stats(obs, 0, 1)
    assert stats.overlap_size == 3
    assert stats.mean_diff == approx(0.0)
    assert stats.sample_var == approx(3.0)


def test_identical_rows():
    obs = ObservationMatrix.from_dense(np.array([[0.3, -1.2, 4.0], [0.3, -1.2, 4.0]]))
    stats = pair_stats(obs, 0, 1)
    assert stats.mean_diff == 0.0
    assert stats.sample_var == 0.0


def test_constant_shift():
    base = np.array([0.5, 1.5, -2.0, 3.25])
    obs = ObservationMatrix.from_dense(np.vstack([base, base + 2.0]))
    stats = pair_stats(obs, 0, 1)
    assert stats.mean_diff == approx(-2.0)
    assert stats.sample_var == approx(0.0, abs=1e-24)


def test_insufficient_overlap():
    obs = ObservationMatrix.from_dense(np.array([[1.0, nan], [2.0, 3.0]]))
    with pytest.raises(InsufficientOverlapError):
        pair_stats(obs, 0, 1)
    stats = pair_stats(obs, 0, 1, require_variance=False)
    assert stats.overlap_size == 1
    assert stats.mean_diff == -1.0
    assert stats.sample_var is None


def test_u_statistic_matches_sample_variance():
    rng = np.random.default_rng(7)
    checked = 0
    for seed in range(5):
        obs = random_matrix(40, 30, 0.6, seed=seed, low=-3.0, high=3.0)
        for _ in range(100):
            u, v = rng.integers(0, obs.m, size=2)
            if len(row_overlap(obs, u, v)) < 2:
                continue
            direct = pair_stats(obs, u, v).sample_var
            assert variance_u_statistic(obs, u, v) == approx(direct, rel=1e-10, abs=1e-14)
            checked += 1
    assert checked >= 400


def test_symmetry():
    obs = random_matrix(12, 20, 0.7, seed=4)
    for u, v in [(0, 1), (3, 7), (11, 2)]:
        forward, backward = pair_stats(obs, u, v), pair_stats(obs, v, u)
        assert forward.sample_var == approx(backward.sample_var)
        assert forward.mean_diff == approx(-backward.mean_diff)


def test_bounded_values_bound_statistics():
    obs = random_matrix(15, 25, 0.8, seed=5, low=-1.0, high=1.0)
    for u in range(obs.m):
        stats = anchor_stats(obs, u)
        defined = stats.overlap >= 2
        assert (stats.sample_var[defined] <= 4.0).all()
        assert (np.abs(stats.mean_diff[defined]) <= 2.0).all()


def test_anchor_stats_match_pair_stats():
    obs = random_matrix(10, 12, 0.6, seed=8)
    stats = anchor_stats(obs, 3)
    for v in range(obs.m):
        pair = pair_stats(obs, 3, v, require_variance=False)
        assert stats.overlap[v] == pair.overlap_size
        if pair.overlap_size >= 1:
            assert stats.mean_diff[v] == approx(pair.mean_diff)
        else:
            assert np.isnan(stats.mean_diff[v])
        if pair.overlap_size >= 2:
            assert stats.sample_var[v] == approx(pair.sample_var)
        else:
            assert np.isnan(stats.sample_var[v])


def test_candidate_rows_by_hand():
    obs = ObservationMatrix.from_dense(np.array([
        [1.0, 2.0, 3.0, nan],
        [1.0, 2.0, nan, 4.0],
        [nan, 2.0, 3.0, 4.0],
    ]))
    assert candidate_rows(obs, 0, 3, beta_low=2).rows == (1, 2)


def test_candidate_rows_empty_column():
    obs = ObservationMatrix.from_dense(np.array([[1.0, 2.0, nan], [1.0, 2.0, nan]]))
    assert len(candidate_rows(obs, 0, 2)) == 0


def test_candidate_window_upper_limit():
    obs = ObservationMatrix.from_dense(np.array([
        [1.0, 2.0, 3.0, nan],
        [1.0, 2.0, 3.0, 4.0],
    ]))
    assert candidate_rows(obs, 0, 3, beta_low=2).rows == (1,)
    assert candidate_rows(obs, 0, 3, beta_low=2, beta_high=2).rows == ()


def test_candidate_self_inclusion(worked_matrix):
    assert candidate_rows(worked_matrix, 1, 2).rows == ()
    assert candidate_rows(worked_matrix, 1, 2, include_self=True).rows == (1,)
    # the anchor must observe the target column to join
    assert candidate_rows(worked_matrix, 0, 2, include_self=True).rows == (1,)


def test_beta_below_two_rejected(worked_matrix):
    with pytest.raises(ConfigError):
        candidate_rows(worked_matrix, 0, 2, beta_low=1)
    with pytest.raises(ConfigError):
        candidate_rows(worked_matrix, 0, 2, beta_low=3, beta_high=2)


def test_pair_table_agrees_with_anchor_stats():
    obs = random_matrix(8, 10, 0.7, seed=12)
    table = PairStatsTable.from_observations(obs)
    assert len(table) == obs.m
    stats = anchor_stats(obs, 5)
    np.testing.assert_array_equal(table.anchor(5).overlap, stats.overlap)
    np.testing.assert_array_equal(table.anchor(5).sample_var, stats.sample_var)
    pair = table.get(5, 2)
    assert pair.overlap_size == stats.overlap[2]


def _deviations(instance, size, trials, rng):
    "Pair statistics of rows 0 and 1 over random overlaps of the given size."
    noisy = instance.observed.dense[[0, 1]]
    mu = mu_oracle(instance, 0, 1)
    means, variances = [], []
    for _ in range(trials):
        cols = rng.choice(noisy.shape[1], size=size, replace=False)
        stats = pair_stats(ObservationMatrix.from_dense(noisy[:, cols]), 0, 1)
        assert stats.overlap_size == size
        means.append(abs(stats.mean_diff - mu))
        variances.append(stats.sample_var)
    return np.median(means), np.array(variances)


@mark.slow
def test_concentration_shrinks_with_overlap():
    instance = synthetic("logistic-of-sum", m=4, n=40000, p=1.0, seed=3, noise=NoiseSpec("uniform", 0.1))
    rng = np.random.default_rng(0)
    # uniform noise on [-0.1, 0.1] has variance 0.1^2 / 3
    gamma_sq = 0.1 ** 2 / 3
    target = sigma_sq_oracle(instance, 0, 1) + 2 * gamma_sq

    small_mean, small_var = _deviations(instance, 100, 200, rng)
    large_mean, large_var = _deviations(instance, 20000, 200, rng)
    assert large_mean * 3 <= small_mean
    assert np.median(np.abs(large_var - target)) * 3 <= np.median(np.abs(small_var - target))


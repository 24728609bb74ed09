import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_sample
from oracles import brute_dft, brute_q
from irregspec import (FrequencyGrid, SpatialSample, constant_weight, dft_at, dft_grid, dft_many,
                       exponential_model, indicator_weight, q_statistic, ridge_term, simulate_sample)
from irregspec.errors import GridMismatchError
from irregspec.sampling import replicate_seed


def test_zero_field():
    smp = SpatialSample(3.0, np.array([[0.1], [1.0]]), np.zeros(2))
    assert dft_at(smp, [0.7]) == 0


def test_single_point_at_origin():
    smp = SpatialSample(1.0, np.zeros((1, 1)), np.array([2.5]))
    for w in (0.0, 1.3, -7.0):
        assert dft_at(smp, [w]) == pytest.approx(2.5)


def test_two_point_cancellation():
    smp = SpatialSample(2 * np.pi, np.array([[0.0], [np.pi]]), np.ones(2))
    assert abs(dft_at(smp, [1.0])) < 1e-15


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 25), st.integers(1, 3), st.floats(1.0, 30.0), st.integers(0, 10_000))
def test_matches_direct_sum(n, dim, lam, seed):
    rng = np.random.default_rng(seed)
    smp = random_sample(rng, n, lam, dim)
    w = rng.normal(size=dim) * 3
    assert dft_at(smp, w) == pytest.approx(brute_dft(smp.locations, smp.values, lam, w), rel=1e-12, abs=1e-12)


def test_grid_matches_pointwise_and_is_hermitian(rng):
    smp = random_sample(rng, 300, 12.0, 2)
    grid = FrequencyGrid(2, 6, 12.0)
    F = dft_grid(smp, grid)
    for k in [(0, 0), (3, -2), (-6, 6)]:
        assert F.at(k) == dft_at(smp, 2 * np.pi * np.array(k) / 12.0)
    neg = F.values.reshape(13, 13)[::-1, ::-1].ravel()
    assert np.max(np.abs(F.values - np.conj(neg))) < 1e-12


def test_worker_count_does_not_change_result(rng):
    smp = random_sample(rng, 5000, 30.0, 1)
    om = FrequencyGrid(1, 600, 30.0).frequencies()
    assert np.array_equal(dft_many(smp, om, workers=1), dft_many(smp, om, workers=4))


def test_grid_mismatch(rng):
    smp = random_sample(rng, 10, 5.0, 1)
    with pytest.raises(GridMismatchError):
        dft_grid(smp, FrequencyGrid(1, 3, 6.0))
    with pytest.raises(GridMismatchError):
        dft_grid(smp, FrequencyGrid(2, 3, 5.0))


def test_cosine_field_peaks_at_its_frequency(rng):
    lam, m = 20.0, 4
    loc = rng.uniform(-lam / 2, lam / 2, (5000, 1))
    smp = SpatialSample(lam, loc, np.cos(2 * np.pi * m * loc[:, 0] / lam))
    F = dft_grid(smp, FrequencyGrid(1, 20, lam))
    per = F.periodogram()
    assert per[F.grid.position(m)] == per.max()


def test_restrict_and_csv(rng, tmp_path):
    smp = random_sample(rng, 30, 6.0, 2)
    F = dft_grid(smp, FrequencyGrid(2, 4, 6.0))
    sub = F.restrict(2)
    assert sub.at((2, -1)) == F.at((2, -1))
    with pytest.raises(GridMismatchError):
        F.restrict(5)
    F.to_csv(tmp_path / "dft.csv", "# x")
    lines = (tmp_path / "dft.csv").read_text().splitlines()
    assert lines[1] == "k1,k2,re,im" and len(lines) == 2 + 81


def test_ridge_examples():
    smp = SpatialSample(2.0, np.zeros((1, 1)), np.array([2.0]))
    assert ridge_term(smp, FrequencyGrid(1, 1, 2.0), constant_weight(), 0) == pytest.approx(12.0)
    zero = SpatialSample(2.0, np.zeros((1, 1)), np.array([0.0]))
    assert ridge_term(zero, FrequencyGrid(1, 1, 2.0), constant_weight(), 0) == 0


def test_ridge_is_diagonal_of_double_sum(rng):
    smp = random_sample(rng, 7, 5.0, 1)
    grid = FrequencyGrid(1, 3, 5.0)
    g = indicator_weight(2.0)
    full = brute_q(smp.locations, smp.values, 5.0, 3, g, [2])
    off = brute_q(smp.locations, smp.values, 5.0, 3, g, [2], drop_diagonal=True)
    assert ridge_term(smp, grid, g, 2) == pytest.approx(full - off, rel=1e-12)
    n = smp.n
    expect = grid.size / n * np.mean(smp.values ** 2)
    assert ridge_term(smp, grid, constant_weight(), 0) == pytest.approx(expect, rel=1e-13)
    assert q_statistic(dft_grid(smp, grid), smp, g, 2).value == pytest.approx(full, rel=1e-10)


def test_dft_variance_small_mc():
    lam, n, R = 20.0, 2000, 300
    m = exponential_model(1.0, 1)
    ks = np.array([0, 3, 10])
    om = 2 * np.pi * ks[:, None] / lam
    J = np.array([dft_many(simulate_sample(n, lam, m, replicate_seed(5, i), method="markov"), om)
                  for i in range(R)])
    emp = np.mean(np.abs(J) ** 2, axis=0)
    se = np.std(np.abs(J) ** 2, axis=0, ddof=1) / np.sqrt(R)
    pred = m.spectral_density(om) + lam / n
    assert np.all(np.abs(emp - pred) <= 3.5 * se)

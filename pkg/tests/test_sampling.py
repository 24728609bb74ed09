import json

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings, strategies as st

from irregspec import (SamplingDensity, SpatialSample, exponential_model, sample_density_locations,
                       sample_uniform_locations, scale_separable_model, simulate_gaussian_field, simulate_sample)
from irregspec.errors import (ConfigError, CsvParseError, DataError, EnvelopeFailureError, InvalidDensityError,
                              NotPositiveDefiniteError)
from irregspec.sampling import field_values, lag_bin_covariance, replicate_seed, stream_pair


def test_uniform_locations_moments():
    s = sample_uniform_locations(100_000, 10.0, 1, 7)
    assert s.shape == (100_000, 1)
    assert np.all(np.abs(s) <= 5.0)
    assert abs(s.mean()) <= 0.05
    assert s.var() == pytest.approx(100 / 12, rel=0.02)


def test_uniform_single_point_and_determinism():
    one = sample_uniform_locations(1, 3.0, 2, 1)
    assert one.shape == (1, 2) and np.all(np.abs(one) <= 1.5)
    assert np.array_equal(sample_uniform_locations(50, 4.0, 2, 99), sample_uniform_locations(50, 4.0, 2, 99))
    assert not np.array_equal(sample_uniform_locations(50, 4.0, 2, 99), sample_uniform_locations(50, 4.0, 2, 98))


def test_uniform_invalid_design():
    with pytest.raises(ConfigError):
        sample_uniform_locations(0, 1.0, 1, 0)


def test_density_uniform_special_case_matches_uniform():
    dens = SamplingDensity(1, {0: 1.0})
    s = sample_density_locations(10_000, 2.0, dens, 3)
    assert scipy.stats.kstest(s[:, 0], "uniform", args=(-1.0, 2.0)).pvalue > 0.01


def test_density_cosine_mean():
    dens = SamplingDensity(1, {0: 1.0, 1: 0.5, -1: 0.5})
    lam = 6.0
    s = sample_density_locations(100_000, lam, dens, 11)
    assert np.mean(np.cos(2 * np.pi * s[:, 0] / lam)) == pytest.approx(0.5, abs=0.01)


@pytest.mark.parametrize("gamma", [{0: 1.0, 1: 0.8, -1: 0.8},  # h negative
                                   {0: 2.0},  # gamma_0 != 1
                                   {0: 1.0, 1: 0.3, -1: 0.1}])  # not Hermitian
def test_invalid_density_rejected(gamma):
    with pytest.raises(InvalidDensityError):
        SamplingDensity(1, gamma)


def test_density_2d_string_keys_and_dict_values():
    dens = SamplingDensity(2, {"0,0": 1.0, "1,0": {"re": 0.25, "im": 0.0}, "-1,0": 0.25})
    assert dens.gamma((1, 0)) == 0.25
    assert dens.l2_norm_sq == pytest.approx(1.125)
    u = np.array([[0.0, 0.3]])
    assert dens.evaluate(u)[0] == pytest.approx(1.5)


def test_density_truncation_counts_dropped():
    dens = SamplingDensity(1, {0: 1.0, 20: 1e-4, -20: 1e-4}, j_max=16)
    assert dens.dropped == 2
    assert dens.is_uniform


def test_envelope_failure_for_spiky_density():
    # a narrow Fejer-type bump: h >= 0, sup h = 2J+1, mean 1
    J = 150
    gamma = {j: 1.0 - abs(j) / (J + 1) for j in range(-J, J + 1)}
    dens = SamplingDensity(1, gamma, j_max=J)
    with pytest.raises(EnvelopeFailureError):
        sample_density_locations(100, 1.0, dens, 0, min_acceptance=0.05)


def test_single_location_variance():
    m = exponential_model(1.0, 1)
    vals, info = field_values(np.zeros((1, 1)), m, 5, size=100_000)
    assert info["method"] == "cholesky"
    assert vals.var() == pytest.approx(1.0, rel=0.02)


@pytest.mark.parametrize("method", ["cholesky", "markov"])
def test_pair_correlation(method):
    m = exponential_model(1.0, 1)
    vals, _ = field_values(np.array([[0.0], [1.0]]), m, 6, method=method, size=100_000)
    assert np.corrcoef(vals.T)[0, 1] == pytest.approx(np.exp(-1.0), abs=0.01)


def test_markov_matches_covariance_on_many_points():
    m = scale_separable_model(0.7, 2.0)
    loc = np.sort(np.random.default_rng(0).uniform(-300, 300, 40))[:, None]
    vals, info = field_values(loc, m, 8, method="markov", size=40_000)
    assert info["method"] == "markov"
    emp = np.cov(vals.T)
    true = 2.0 * np.exp(-0.7 * np.abs(loc - loc.T))
    assert np.max(np.abs(emp - true)) < 0.08


def test_coincident_locations():
    m = exponential_model(1.0, 1)
    loc = np.array([[0.5], [0.5]])
    with pytest.raises(NotPositiveDefiniteError):
        simulate_gaussian_field(loc, m, 2.0, jitter=0.0, seed=1)
    smp = simulate_gaussian_field(loc, m, 2.0, seed=1)
    assert smp.metadata["jitter_used"] > 0


def test_simulation_is_deterministic():
    m = exponential_model(1.0, 2)
    a = simulate_sample(60, 5.0, m, 42)
    b = simulate_sample(60, 5.0, m, 42)
    assert np.array_equal(a.locations, b.locations) and np.array_equal(a.values, b.values)


def test_seed_streams_are_distinct():
    loc_rng, field_rng = stream_pair(3)
    assert loc_rng.random() != field_rng.random()
    assert replicate_seed(1, 0).entropy == replicate_seed(1, 1).entropy
    assert replicate_seed(1, 0).spawn_key != replicate_seed(1, 1).spawn_key


def test_lag_bin_covariance_recovers_model():
    m = exponential_model(1.0, 1)
    rng = np.random.default_rng(2)
    samples = [simulate_sample(200, 20.0, m, int(rng.integers(1 << 30)), method="markov") for _ in range(60)]
    lags, prods, se, counts = lag_bin_covariance(samples, [0.0, 0.25, 0.75, 1.25])
    assert np.all(counts > 0)
    assert np.all(np.abs(prods - np.exp(-lags)) <= 4 * se + 0.02)


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 30), st.integers(1, 2), st.floats(0.5, 50))
def test_csv_round_trip(tmp_path_factory, n, dim, lam):
    rng = np.random.default_rng(n)
    smp = SpatialSample(lam, rng.uniform(-lam / 2, lam / 2, (n, dim)), rng.standard_normal(n), {"k": 1})
    p = tmp_path_factory.mktemp("csv") / "s.csv"
    smp.to_csv(p, "# comment")
    smp.write_metadata(str(p) + ".json")
    back = SpatialSample.from_csv(p)
    assert back.lam == lam
    assert np.array_equal(back.locations, smp.locations)
    assert np.array_equal(back.values, smp.values)


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("s1,z\n0.1,0.2\n0.3,oops\n")
    with pytest.raises(CsvParseError) as err:
        SpatialSample.from_csv(p, lam=1.0)
    assert err.value.line == 3
    p.write_text("x,z\n0.1,0.2\n")
    with pytest.raises(CsvParseError):
        SpatialSample.from_csv(p, lam=1.0)
    p.write_text("s1,z\n0.1,0.2\n")
    with pytest.raises(DataError):
        SpatialSample.from_csv(p)
    p.write_text("s1,z\n")
    with pytest.raises(DataError):
        SpatialSample.from_csv(p, lam=1.0)


def test_sample_rejects_points_outside_box():
    with pytest.raises(DataError):
        SpatialSample(2.0, np.array([[1.5]]), np.array([0.0]))


def test_metadata_sidecar_is_json(tmp_path):
    smp = simulate_sample(10, 4.0, exponential_model(1.0, 1), 3)
    smp.write_metadata(tmp_path / "m.json", {"extra": 1})
    meta = json.loads((tmp_path / "m.json").read_text())
    assert meta["lambda"] == 4.0 and meta["extra"] == 1 and meta["seed"] == 3

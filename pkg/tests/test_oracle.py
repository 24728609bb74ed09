import numpy as np
import pytest
import scipy.integrate

from oracles import composition_sum
from irregspec import (FrequencyGrid, SamplingDensity, WeightFunction, constant_weight, exponential_model,
                       indicator_weight, inverse_spectral_weight, scale_separable_model)
from irregspec import oracle
from irregspec.errors import ConfigError


M1 = exponential_model(1.0, 1)
HALF_PI_GRID = FrequencyGrid(1, 10, 20.0)  # box (-pi, pi)


def test_dft_covariance_examples():
    p = oracle.predict_dft_covariance(M1, FrequencyGrid(1, 100, 20.0), 0, 0, 2000)
    assert p.value == pytest.approx(2.01)
    off = oracle.predict_dft_covariance(M1, FrequencyGrid(1, 100, 20.0), 1, 4, 2000)
    assert off.value == 0 and off.order_tag == "1/lam^1"
    p2 = oracle.predict_dft_covariance(exponential_model(1.0, 2), FrequencyGrid(2, 5, 10.0), (1, 2), (1, 3), 100)
    assert p2.order_tag == "1/lam^1" and p2.meta["b"] == 1
    big = oracle.predict_dft_covariance(M1, FrequencyGrid(1, 10, 1e6), 3, 3, 10 ** 12)
    assert big.value.real == pytest.approx(M1.spectral_density(2 * np.pi * 3 / 1e6), rel=1e-6)


def test_q_mean_examples():
    p = oracle.predict_q_mean(M1, constant_weight(), HALF_PI_GRID)
    assert p.value.real == pytest.approx(2 / np.pi * np.arctan(np.pi), rel=1e-10)
    assert p.valid
    assert oracle.predict_q_mean(M1, constant_weight(), HALF_PI_GRID, 1).value == 0
    assert oracle.predict_q_mean(M1, constant_weight(0.0), HALF_PI_GRID).value == 0


def test_q_mean_fixed_domain():
    p = oracle.predict_q_mean(M1, constant_weight(), FrequencyGrid(1, 7, 20.0), regime="fixed", C=0.25)
    assert p.value.real == pytest.approx(2 / np.pi * np.arctan(np.pi / 2), rel=1e-10)
    with pytest.raises(ConfigError):
        oracle.predict_q_mean(M1, constant_weight(), HALF_PI_GRID, regime="mixed")


def test_q_mean_indicator_and_inverse():
    grid = FrequencyGrid(1, 100, 20.0)
    ind = oracle.predict_q_mean(M1, indicator_weight(2.0), grid)
    assert ind.value.real == pytest.approx(2 / np.pi * np.arctan(2.0), rel=1e-10)
    inv = oracle.predict_q_mean(M1, inverse_spectral_weight(M1), grid)
    assert inv.value.real == pytest.approx(2 * grid.box_half_width() / (2 * np.pi), rel=1e-10)


def test_variance_constants_closed_form():
    v = oracle.predict_q_variance(M1, constant_weight(), HALF_PI_GRID)
    expect = 4 / np.pi * (np.arctan(np.pi) + np.pi / (1 + np.pi ** 2))
    assert v.c1.value.real == pytest.approx(expect, rel=1e-10)
    assert v.c2.value.real == pytest.approx(expect, rel=1e-10)
    f2 = lambda w: M1.spectral_density(w) ** 2  # noqa: E731
    gauss = oracle.tensor_integral(f2, [-np.pi], [np.pi], rule="gauss")
    simpson = oracle.tensor_integral(f2, [-np.pi], [np.pi], rule="simpson")
    assert abs(gauss - simpson) <= 1e-8 * abs(gauss)


def test_variance_symmetry_and_zero():
    grid = FrequencyGrid(2, 6, 5.0)
    m2 = exponential_model(1.0, 2)
    v = oracle.predict_q_variance(m2, indicator_weight(1.0), grid)
    assert v.c1.value == pytest.approx(v.c2.value, rel=1e-10)
    z = oracle.predict_q_variance(m2, constant_weight(0.0), grid)
    assert z.c1.value == 0 and z.c2.value == 0


def test_c1_is_real_for_complex_weight():
    g = WeightFunction("cplx", lambda w: np.exp(1j * w[:, 0]) + 0.5 * np.sin(w[:, 0]), 1.5)
    v = oracle.predict_q_variance(M1, g, FrequencyGrid(1, 30, 10.0), r=2)
    assert abs(v.c1.value.imag) <= 1e-10
    assert abs(v.c1_r.value.imag) <= 1e-10


def test_r_dependent_constants_approach_r_free():
    diffs = []
    for lam in (10.0, 20.0, 40.0, 80.0):
        v = oracle.predict_q_variance(M1, constant_weight(), FrequencyGrid(1, int(5 * lam), lam), r=1)
        assert v.c1_r.valid
        diffs.append(abs(v.c1_r.value - v.c1.value))
    ratios = np.array(diffs[1:]) / np.array(diffs[:-1])
    assert np.all(ratios < 0.6)
    v0 = oracle.predict_q_variance(M1, constant_weight(), FrequencyGrid(1, 50, 10.0), r=0)
    assert v0.c1_r.value == pytest.approx(v0.c1.value, rel=1e-10)
    assert v0.re_var(0) == pytest.approx(v0.c1.value.real, rel=1e-10)
    assert v0.re_var(1) == pytest.approx(0.5 * v0.c1_r.value.real)


def test_checked_integral_flags_disagreement():
    rough = lambda w: np.sign(np.sin(40 * w[:, 0]))  # noqa: E731
    _, _, valid = oracle.checked_integral(rough, [0.0], [1.0], rtol=1e-12)
    assert not valid


def test_tensor_integral_2d_and_3d():
    val = oracle.tensor_integral(lambda w: np.exp(-np.sum(w ** 2, axis=1)), [-6, -6], [6, 6])
    assert val == pytest.approx(np.pi, rel=1e-12)
    val3 = oracle.tensor_integral(lambda w: np.prod(np.cos(w), axis=1), [0] * 3, [np.pi / 2] * 3)
    assert val3 == pytest.approx(1.0, rel=1e-12)


COSINE = {0: 1.0, 1: 0.5, -1: 0.5}


def test_gamma_convolutions():
    dens = SamplingDensity(1, COSINE)
    for s in range(-5, 6):
        assert oracle.gamma_convolution(dens, s) == pytest.approx(composition_sum(COSINE, s, 2))
        assert oracle.fourfold_convolution(dens, s) == pytest.approx(composition_sum(COSINE, s, 4))
    assert oracle.gamma_convolution(dens, 2) == pytest.approx(0.25)
    assert oracle.fourfold_convolution(dens, 0) == pytest.approx(4.375)
    uni = SamplingDensity.uniform(1)
    assert oracle.fourfold_convolution(uni, 0) == 1 and oracle.fourfold_convolution(uni, 1) == 0


def test_gamma_convolution_2d():
    gamma = {(0, 0): 1.0, (1, 0): 0.25, (-1, 0): 0.25, (0, 1): 0.2, (0, -1): 0.2}
    dens = SamplingDensity(2, gamma)
    for s in [(0, 0), (1, 1), (2, 0), (0, -2), (3, 0)]:
        total = sum(gamma.get((j1, j2), 0) * gamma.get((s[0] - j1, s[1] - j2), 0)
                    for j1 in range(-2, 3) for j2 in range(-2, 3))
        assert oracle.gamma_convolution(dens, s) == pytest.approx(total)


def test_nonuniform_dft_covariance():
    dens = SamplingDensity(1, COSINE)
    grid = FrequencyGrid(1, 100, 20.0)
    p = oracle.predict_dft_covariance_nonuniform(M1, dens, grid, 3, 5, 2000)
    assert p.value == pytest.approx(M1.spectral_density(2 * np.pi * 5 / 20) / 4)
    p1 = oracle.predict_dft_covariance_nonuniform(M1, dens, grid, 3, 4, 2000)
    assert p1.value == pytest.approx(M1.spectral_density(2 * np.pi * 4 / 20) * 1.0 + 0.5 * 20 / 2000)
    assert oracle.predict_dft_covariance_nonuniform(M1, dens, grid, 0, 9, 2000).value == 0
    uni = SamplingDensity.uniform(1)
    assert (oracle.predict_dft_covariance_nonuniform(M1, uni, grid, 2, 2, 2000).value
            == pytest.approx(oracle.predict_dft_covariance(M1, grid, 2, 2, 2000).value))


def test_nonuniform_mean():
    grid = FrequencyGrid(1, 100, 20.0)
    g = indicator_weight(2.0)
    base = oracle.predict_q_mean(M1, g, grid).value
    uni = oracle.predict_q_mean_nonuniform(M1, g, SamplingDensity.uniform(1), grid, 0)
    assert uni.value == pytest.approx(base)
    dens = SamplingDensity(1, COSINE)
    assert oracle.predict_q_mean_nonuniform(M1, g, dens, grid, 2).value == pytest.approx(base / 4)
    assert oracle.predict_q_mean_nonuniform(M1, g, dens, grid, 7).value == 0


def test_nonuniform_variance_reduces_to_uniform():
    grid = FrequencyGrid(1, 50, 10.0)
    g = WeightFunction("cplx", lambda w: np.exp(0.3j * w[:, 0]), 1.0)
    u = oracle.predict_q_variance_nonuniform(M1, g, SamplingDensity.uniform(1), grid, 1, 1)
    v = oracle.predict_q_variance(M1, g, grid)
    assert (u["u1"].value + u["u2"].value) == pytest.approx(v.c1.value, rel=1e-10)
    H = grid.box_half_width()
    direct, _ = scipy.integrate.quad(lambda w: M1.spectral_density(w) ** 2, -H, H, epsabs=1e-13)
    assert u["u1"].value.real == pytest.approx(direct / (2 * np.pi), rel=1e-9)
    # r1 + r2 = 2 is outside the support of the delta sequence
    assert u["u3"].value == 0 and u["u4"].value == 0
    u0 = oracle.predict_q_variance_nonuniform(M1, g, SamplingDensity.uniform(1), grid, 0, 0)
    assert (u0["u3"].value + u0["u4"].value) == pytest.approx(v.c2.value, rel=1e-10)
    zero = oracle.predict_q_variance_nonuniform(M1, constant_weight(0.0), SamplingDensity(1, COSINE), grid, 1, 1)
    assert all(p.value == 0 for p in zero.values())


def _brute_second_moment(model, lam, w1, w2, n):
    # E[J(w1) conj J(w2)] by nested quadrature over two uniform locations, split at the kink s1 = s2
    def inner(s1, part):
        fn = lambda s2: model.covariance(s1 - s2) * part(s1 * w1 - s2 * w2)  # noqa: E731
        return sum(scipy.integrate.quad(fn, lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
                   for lo, hi in ((-lam / 2, s1), (s1, lam / 2)))

    def outer(part):
        return scipy.integrate.quad(lambda s1: inner(s1, part), -lam / 2, lam / 2, epsabs=1e-12, epsrel=1e-12)[0]

    cross = (outer(np.cos) + 1j * outer(np.sin)) / lam ** 2
    diag = model.variance() if w1 == w2 else 0.0
    return lam / n * diag + lam * (n - 1) / n * cross


@pytest.mark.parametrize("k1,k2", [(0, 0), (2, 2), (0, 1), (1, 3)])
def test_exact_dft_moment_against_double_integral(k1, k2):
    lam, n = 5.0, 50
    grid = FrequencyGrid(1, 5, lam)
    m = scale_separable_model(0.8, 1.3)
    ref = _brute_second_moment(m, lam, 2 * np.pi * k1 / lam, 2 * np.pi * k2 / lam, n)
    assert oracle.exact_dft_moment(m, grid, k1, k2, n) == pytest.approx(ref, abs=1e-9)


def test_exact_dft_moment_closed_form_at_zero():
    lam, n, al, phi = 5.0, 50, 0.8, 1.3
    inner = lam / al - (1 - np.exp(-al * lam)) / al ** 2
    expect = lam / n * phi + lam * (n - 1) / n * phi * 2 * inner / lam ** 2
    got = oracle.exact_dft_moment(scale_separable_model(al, phi), FrequencyGrid(1, 5, lam), 0, 0, n)
    assert got == pytest.approx(expect, rel=1e-13)


def test_exact_kernel_separable_2d_factorises():
    m = scale_separable_model([0.7, 1.4], 2.0)
    lam = 6.0
    w = np.array([[0.5, -1.0]])
    k = oracle.exact_kernel(m, lam, w, [0.0, 2 * np.pi / lam])[0]
    k1 = oracle.exact_kernel(scale_separable_model(0.7, 1.0), lam, w[:, :1], [0.0])[0]
    k2 = oracle.exact_kernel(scale_separable_model(1.4, 1.0), lam, w[:, 1:], [2 * np.pi / lam])[0]
    assert k == pytest.approx(2.0 * k1 * k2, rel=1e-12)
    with pytest.raises(ConfigError):
        oracle.exact_kernel(exponential_model(1.0, 2), lam, w, [0.0, 0.0])


def test_exact_q_mean_approaches_leading_order():
    vals = []
    for lam in (20.0, 40.0, 80.0):
        grid = FrequencyGrid(1, int(5 * lam), lam)
        exact = oracle.exact_q_mean(M1, constant_weight(), grid, 0, int(100 * lam))
        lead = oracle.predict_q_mean(M1, constant_weight(), grid).value
        vals.append(abs(exact - lead))
    assert vals[2] < vals[1] < vals[0]

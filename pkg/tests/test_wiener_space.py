import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from solitonqm._rng import substream
from solitonqm.exceptions import GridMismatchError
from solitonqm.wiener_space import (
    SampledFunction,
    brownian_paths,
    covariance_check,
    hermitian_decompose,
    inner_product,
    random_inner_product,
    sample_brownian,
    sample_complex_brownian,
    stochastic_integral,
    unit_functions,
    unitarity_check,
)

M = 64
values = arrays(complex, M + 1, elements=st.complex_numbers(max_magnitude=10, allow_nan=False))


def test_decompose_real_equal():
    psi = SampledFunction.from_callable(lambda s: 1 + s, M)
    d = hermitian_decompose(psi, psi)
    assert d.omega_part == 0.0
    assert d.g_part == pytest.approx(psi.norm_squared())


def test_decompose_imaginary_multiple():
    psi = SampledFunction.from_callable(lambda s: np.cos(3 * s) + 0.2j, M)
    d = hermitian_decompose(psi, 1j * psi)
    assert d.g_part == pytest.approx(0.0, abs=1e-15)
    assert d.omega_part == pytest.approx(-psi.norm_squared())


@given(values, values)
def test_decompose_symmetries(v1, v2):
    a, b = SampledFunction(v1), SampledFunction(v2)
    d12, d21 = hermitian_decompose(a, b), hermitian_decompose(b, a)
    assert d12.g_part == pytest.approx(d21.g_part, rel=1e-12, abs=1e-12)
    assert d12.omega_part == pytest.approx(-d21.omega_part, rel=1e-12, abs=1e-12)
    ip = inner_product(a, b)
    assert d12.inner_product == pytest.approx(ip, rel=1e-12, abs=1e-11)


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        inner_product(SampledFunction(np.ones(5)), SampledFunction(np.ones(6)))
    z = sample_complex_brownian(8, substream(0, "t"))
    with pytest.raises(GridMismatchError):
        stochastic_integral(SampledFunction(np.ones(5)), z)


def test_brownian_starts_at_zero():
    p = sample_brownian(M, substream(3, "b"))
    assert p.values[0] == 0.0 and p.values.size == M + 1


def test_brownian_variance_at_one():
    x = brownian_paths(20_000, 16, substream(3, "v"))
    var = np.mean(x[:, -1] ** 2)
    se = np.std(x[:, -1] ** 2, ddof=1) / math.sqrt(20_000)
    assert abs(var - 1.0) < 3 * se


def test_integral_trivial_cases():
    z = sample_complex_brownian(M, substream(5, "z"))
    zero = SampledFunction(np.zeros(M + 1))
    assert stochastic_integral(zero, z) == 0
    one = SampledFunction(np.ones(M + 1))
    assert stochastic_integral(one, z) == pytest.approx(z.values[-1], abs=1e-14)
    s = np.arange(M + 1) / M
    half = SampledFunction((s < 0.5).astype(float))
    assert stochastic_integral(half, z) == pytest.approx(z.values[M // 2], abs=1e-14)


@given(values, values, st.complex_numbers(max_magnitude=5, allow_nan=False))
def test_integral_linear(v1, v2, c):
    z = sample_complex_brownian(M, substream(9, "lin"))
    a, b = SampledFunction(v1), SampledFunction(v2)
    lhs = stochastic_integral(SampledFunction(v1 + c * v2), z)
    rhs = stochastic_integral(a, z) + c * stochastic_integral(b, z)
    assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))


@pytest.mark.parametrize("name", ["constant", "sine", "chirp"])
def test_unit_functions_unit_norm(name):
    assert unit_functions(4096)[name].norm_squared() == pytest.approx(1.0, rel=2e-3)


def test_unitarity_and_scaling():
    psi = unit_functions(256)["sine"]
    rep = unitarity_check(psi, 4000, seed=11)
    assert rep.passed and rep.convention == "ito-left-point"
    rep2 = unitarity_check(2 * psi, 4000, seed=11)
    assert rep2.riemann_sum == pytest.approx(4 * rep.riemann_sum)
    assert rep2.mc_mean == pytest.approx(4 * rep.mc_mean)


def test_unitarity_workers_identical():
    psi = unit_functions(128)["chirp"]
    a = unitarity_check(psi, 3000, seed=2, workers=1, block_size=500)
    b = unitarity_check(psi, 3000, seed=2, workers=3, block_size=500)
    assert a.mc_mean == b.mc_mean and a.std_error == b.std_error


def test_unitarity_requires_paths():
    with pytest.raises(ValueError):
        unitarity_check(unit_functions(16)["constant"], 10)


def test_covariance_small():
    rep = covariance_check([(0.3, 0.7), (1.0, 1.0)], n_paths=20_000, n_intervals=64, seed=4)
    assert rep.passed
    # times snap to the grid: 0.3 -> 19/64
    np.testing.assert_allclose(rep.expected, [19 / 64, 1.0])


def test_random_inner_product():
    rng = substream(1, "rip")
    a = np.exp(2j * math.pi * rng.random(20_000))
    m, se = random_inner_product(a, a)
    assert abs(m.imag) < 1e-15 and m.real == pytest.approx(1.0)
    b = np.exp(2j * math.pi * rng.random(20_000))
    m, se = random_inner_product(a, b)
    assert abs(m) < 3 * se
    m, _ = random_inner_product(a, np.conj(a))
    assert isinstance(m, complex)
    with pytest.raises(ValueError):
        random_inner_product(a, b[:10])

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from solitonqm._rng import substream
from solitonqm.exceptions import NormalizationError
from solitonqm.random_ensemble import BumpProfile, EnsembleConfig, LineGrid, TrialBatch, sample_ensemble
from solitonqm.stochastic_qubit import (
    MINUS,
    ONE,
    PLUS,
    ZERO,
    PhaseExtraction,
    ProbBit,
    chsh_scan,
    chsh_value,
    cnot,
    dichotomic_correlation,
    dichotomic_sample,
    end_to_end_phase_pipeline,
    extract_trial_phases,
    hadamard,
    initialize_register,
    most_probable_center,
    random_phase,
    triangle_correlation,
    uniform_phases,
    wrap_angle,
)

BUMP = BumpProfile()
angle = st.floats(-20, 20, allow_nan=False)


def test_wrap_angle():
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.3) == 0.3
    np.testing.assert_allclose(wrap_angle(np.array([2 * math.pi, -7.0])), [0.0, -7.0 + 2 * math.pi], atol=1e-15)


@given(angle)
def test_wrap_angle_range_and_odd(x):
    w = wrap_angle(x)
    assert -math.pi <= w <= math.pi
    assert wrap_angle(-x) == -w
    assert math.cos(w) == pytest.approx(math.cos(x), abs=1e-12)


@pytest.mark.parametrize("theta0", [0.0, 0.7, -2.5, 3.0])
def test_phase_extraction_known_field(theta0):
    grid = LineGrid(-3, 3, 192)
    d0 = 0.1234567
    out = most_probable_center(BUMP.field(grid.points - d0, theta0), grid, BUMP)
    assert out.overlap_arg == pytest.approx(-theta0, abs=1e-12)
    assert out.overlap_modulus == pytest.approx(BUMP.hbar, rel=1e-8)
    assert abs(out.best_center - d0) < grid.h


def test_phase_extraction_noisy_stays_in_cell():
    grid = LineGrid(-3, 3, 192)
    rng = substream(2, "noise")
    f = BUMP.field(grid.points - 0.4, 1.1)
    f = f + 0.02 * (rng.standard_normal(f.size) + 1j * rng.standard_normal(f.size))
    out = most_probable_center(f, grid, BUMP)
    assert abs(out.best_center - 0.4) < grid.h
    assert abs(wrap_angle(out.overlap_arg + 1.1)) < 0.05


def test_center_converges_second_order():
    d0 = 0.1234567
    errs = []
    for n in (96, 192, 384):
        g = LineGrid(-3, 3, n)
        errs.append(abs(most_probable_center(BUMP.field(g.points - d0), g, BUMP).best_center - d0))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 1.9


def test_golden_refinement_is_tighter():
    g = LineGrid(-3, 3, 192)
    out = most_probable_center(BUMP.field(g.points - 0.1234567), g, BUMP, refine="golden")
    assert abs(out.best_center - 0.1234567) < 1e-8


def test_phase_extraction_errors():
    g = LineGrid(-3, 3, 64)
    with pytest.raises(NormalizationError):
        most_probable_center(np.zeros(65), g, BUMP)
    with pytest.raises(ValueError):
        most_probable_center(np.ones(10), g, BUMP)
    with pytest.raises(ValueError):
        most_probable_center(np.ones(65), g, BUMP, refine="cubic")


def test_random_phase_reduction():
    ex = [PhaseExtraction(0.0, 1.0, a) for a in (2.0, 3.0, 2.5)]
    assert random_phase(ex) == pytest.approx(7.5 - 2 * math.pi)
    assert random_phase([PhaseExtraction(0.0, 1.0, -0.5)]) == pytest.approx(2 * math.pi - 0.5)
    assert random_phase([]) == 0.0


def test_dichotomic_tie_breaks():
    assert dichotomic_sample(math.pi / 2, 0.0) == 1   # cos rounds to +6e-17
    assert dichotomic_sample(0.0, math.pi) == -1
    np.testing.assert_array_equal(dichotomic_sample(np.array([0.0, 2.0]), 0.0), [1, -1])


@pytest.mark.parametrize("dtheta, value", [(0.0, 1.0), (math.pi / 2, 0.0), (math.pi, -1.0), (math.pi / 3, 1 / 3)])
def test_correlation_reference_angles(dtheta, value):
    est = dichotomic_correlation(0.3, 0.3 + dtheta, n_samples=100_000, seed=8)
    assert est.analytic == pytest.approx(value, abs=1e-12)
    # four cases on one phase sample: 4 sigma keeps the family-wise false alarm rate small
    assert abs(est.estimate - value) <= max(4 * est.std_error, 1e-12)


@given(angle, angle)
def test_triangle_law_periodic_and_symmetric(a, b):
    assert triangle_correlation(b - a) == pytest.approx(triangle_correlation(a - b))
    assert triangle_correlation(b - a + 2 * math.pi) == pytest.approx(triangle_correlation(b - a), abs=1e-9)
    assert -1 <= triangle_correlation(b - a) <= 1


def test_correlation_samples_validation_and_determinism():
    with pytest.raises(ValueError):
        dichotomic_correlation(0, 1, n_samples=10)
    a = dichotomic_correlation(0.1, 1.2, n_samples=5000, seed=1, workers=1)
    b = dichotomic_correlation(0.1, 1.2, n_samples=5000, seed=1, workers=4)
    assert tuple(a) == tuple(b)
    np.testing.assert_array_equal(uniform_phases(5000, 1), uniform_phases(5000, 1, workers=3))


def test_chsh_models():
    tri = chsh_scan("triangle", 64)
    assert tri.max_S == pytest.approx(2.0, abs=1e-9)
    qm = chsh_scan("qm_cosine", 64)
    assert qm.max_S == pytest.approx(2 * math.sqrt(2), abs=1e-9)
    with pytest.raises(ValueError):
        chsh_scan("gaussian", 64)
    with pytest.raises(ValueError):
        chsh_scan("triangle", 16)


def test_chsh_degenerate_angles():
    assert abs(chsh_value("triangle", 0.0, 0.0, 0.0, 0.0)) == pytest.approx(2.0)
    assert abs(chsh_value("qm_cosine", 0.0, 0.0, 0.0, 0.0)) == pytest.approx(2.0)


def test_probbit_constants():
    assert ZERO.probabilities == (1, 0) and ONE.probabilities == (0, 1)
    assert PLUS.probabilities == (Fraction(1, 2), Fraction(1, 2))
    assert hadamard(ZERO) == PLUS and hadamard(ONE) == MINUS
    assert hadamard(PLUS) == ZERO and hadamard(MINUS) == ONE
    with pytest.raises(ValueError):
        ProbBit(1, 1)
    with pytest.raises(ValueError):
        ProbBit(1, 0, -1)


@given(st.floats(-math.pi, math.pi))
def test_gate_involutions(a):
    bit = ProbBit.at_angle(a)
    assert bit.norm_squared == 1
    assert hadamard(hadamard(bit)) == bit
    for c in (0, 1):
        assert cnot(c, cnot(c, bit)) == bit
    np.testing.assert_allclose(bit.amplitudes, (math.cos(a), math.sin(a)), atol=1e-9)


def test_cnot_sampled_control():
    assert cnot(1, ZERO) == ONE and cnot(0, ZERO) == ZERO
    with pytest.raises(ValueError):
        cnot(PLUS, ZERO)
    rng = substream(0, "ctl")
    ctl = [PLUS.sample(rng) for _ in range(4000)]
    assert abs(np.mean(ctl) - 0.5) < 0.03
    assert all(cnot(c, ZERO) == (ONE if c else ZERO) for c in ctl[:20])


def test_register_initialization():
    green = initialize_register(3, forced_signal=+1)
    assert green.values == (0, 0, 0) and green.bits == (ZERO,) * 3
    red = initialize_register(2, forced_signal=-1)
    assert red.values == (1, 1) and red.bits == (ONE, ONE)
    signals = [initialize_register(1, rng=substream(4, "sig", i)).signal for i in range(2000)]
    assert abs(np.mean(signals)) < 3 / math.sqrt(2000) * 1.5
    with pytest.raises(ValueError):
        initialize_register(0)
    with pytest.raises(ValueError):
        initialize_register(1, forced_signal=0)


def test_pipeline_uniform_phases():
    conf = EnsembleConfig(n_particles=1, n_trials=2000, domain=((0.0, 200.0),), seed=6)
    res = end_to_end_phase_pipeline(sample_ensemble(conf, BUMP), BUMP, [0.0, math.pi / 3])
    assert res.uniform
    row = [r for r in res.rows if r[0] == 0.0 and r[1] == pytest.approx(math.pi / 3)][0]
    assert row[2] == pytest.approx(1 / 3)
    assert abs(row[3] - row[2]) <= 3 * row[4]
    assert len(res.rows) == 3


def test_pipeline_flags_degenerate_phases():
    n = 500
    batch = TrialBatch(np.linspace(10, 190, n).reshape(n, 1, 1), np.zeros((n, 1)))
    res = end_to_end_phase_pipeline(batch, BUMP, [0.0])
    assert not res.uniform
    np.testing.assert_allclose(res.phases % (2 * math.pi), 0.0, atol=1e-9)


def test_pipeline_multiparticle_phase_sum():
    conf = EnsembleConfig(n_particles=3, n_trials=50, domain=((0.0, 300.0),), cell_volume=1e6, seed=2)
    batch = sample_ensemble(conf, BUMP)
    phases = extract_trial_phases(batch, BUMP)
    expected = np.mod(-batch.phases.sum(axis=1), 2 * math.pi)
    diff = np.angle(np.exp(1j * (phases - expected)))
    assert np.max(np.abs(diff)) < 1e-9

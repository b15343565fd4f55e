import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from solitonqm.epr_entanglement import (
    CURVE_HEADER,
    SIGMA,
    build_entangled_pair,
    coplanar_direction,
    correlation_curve,
    direction,
    qm_spin_correlation,
    singlet_state,
    soliton_spin_correlation_exact,
    soliton_spin_correlation_mc,
)
from solitonqm.exceptions import NormalizationError

Z = np.array([0.0, 0.0, 1.0])
X = np.array([1.0, 0.0, 0.0])

unit = st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)).filter(
    lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.asarray(v) / np.linalg.norm(v))


@pytest.fixture(scope="module")
def pair(normalized):
    return build_entangled_pair(normalized)


def test_singlet_state():
    s = singlet_state()
    assert np.linalg.norm(s.amplitudes) == pytest.approx(1.0)
    np.testing.assert_allclose(s.amplitudes, [0, 0.70710678, -0.70710678, 0], atol=1e-8)
    sz_total = np.kron(SIGMA[2], np.eye(2)) + np.kron(np.eye(2), SIGMA[2])
    assert s.expectation(sz_total) == pytest.approx(0.0)


def test_direction_validation():
    with pytest.raises(ValueError):
        direction([1.0, 1.0, 0.0])


def test_qm_examples():
    assert qm_spin_correlation(Z, Z) == pytest.approx(-1.0)
    assert qm_spin_correlation(Z, X) == pytest.approx(0.0, abs=1e-15)
    assert qm_spin_correlation(Z, coplanar_direction(math.pi / 3)) == pytest.approx(-0.5)


@given(unit, unit)
def test_qm_is_minus_dot(a, b):
    assert qm_spin_correlation(a, b) == pytest.approx(-float(a @ b), abs=1e-12)


def test_pair_normalization(pair, normalized):
    assert pair.norm_pair == pytest.approx(1.0, rel=1e-6)
    scaled = build_entangled_pair(normalized.scaled(1.5), require_normalized=False)
    assert scaled.norm_pair == pytest.approx(1.5 ** 4 * pair.norm_pair)
    with pytest.raises(NormalizationError):
        build_entangled_pair(normalized.scaled(1.5))


def test_antisymmetry(pair):
    sw = pair.spin_part.swapped()
    np.testing.assert_allclose(sw.amplitudes, -pair.spin_part.amplitudes)
    a, b = coplanar_direction(0.4), coplanar_direction(1.9)
    assert qm_spin_correlation(a, b, sw) == pytest.approx(qm_spin_correlation(a, b))


def test_exact_examples(pair, normalized):
    assert soliton_spin_correlation_exact(pair, Z, Z) == pytest.approx(-1.0, abs=1e-6)
    assert abs(soliton_spin_correlation_exact(pair, Z, X)) < 1e-8
    big = build_entangled_pair(normalized.scaled(math.sqrt(2.0)), require_normalized=False)
    a, b = coplanar_direction(0.3), coplanar_direction(1.1)
    assert soliton_spin_correlation_exact(big, a, b) == pytest.approx(-4 * float(a @ b), rel=1e-9)


@settings(max_examples=50)
@given(unit, unit)
def test_exact_coincides_with_pauli(pair, a, b):
    assert soliton_spin_correlation_exact(pair, a, b) == pytest.approx(qm_spin_correlation(a, b), abs=1e-6)


def test_rotational_invariance(pair):
    rots = Rotation.random(100, random_state=7).as_matrix()
    a, b = coplanar_direction(0.0), coplanar_direction(0.8)
    vals = [soliton_spin_correlation_exact(pair, r @ a, r @ b) for r in rots]
    assert max(vals) - min(vals) < 1e-9


def test_mc_examples(pair):
    res = soliton_spin_correlation_mc(pair, Z, Z, n_trials=10_000, n_replicas=200, seed=3)
    assert abs(res.estimate + 1.0) <= 3 * res.std_error and not res.flagged
    est, se = soliton_spin_correlation_mc(pair, Z, X, n_trials=10_000, n_replicas=100, seed=4)
    assert abs(est) <= 3 * se + 1e-15


def test_mc_forced_zero_phases_flagged(pair):
    res = soliton_spin_correlation_mc(pair, Z, Z, n_trials=1000, n_replicas=10, phases=np.zeros(1000))
    assert res.flagged
    assert res.estimate == pytest.approx(-1000.0)


def test_mc_coverage_over_seeds(pair):
    a, b = coplanar_direction(0.2), coplanar_direction(2.0)
    hits = 0
    for seed in range(100):
        r = soliton_spin_correlation_mc(pair, a, b, n_trials=1000, n_replicas=50, seed=1000 + seed)
        hits += abs(r.estimate - r.exact) <= 3 * r.std_error
    # >= 99% nominally; 3-sigma binomial slack on 100 seeds plus the t-tail of 50 replicas
    assert hits >= 95


def test_mc_worker_independence(pair):
    a, b = coplanar_direction(0.5), coplanar_direction(0.9)
    r1 = soliton_spin_correlation_mc(pair, a, b, n_trials=2000, n_replicas=40, seed=5, workers=1)
    r2 = soliton_spin_correlation_mc(pair, a, b, n_trials=2000, n_replicas=40, seed=5, workers=4)
    assert (r1.estimate, r1.std_error) == (r2.estimate, r2.std_error)


def test_mc_validation(pair):
    with pytest.raises(ValueError):
        soliton_spin_correlation_mc(pair, Z, Z, n_trials=10)


def test_curve(pair):
    rows = correlation_curve(pair, np.linspace(0, math.pi, 181))
    assert len(CURVE_HEADER) == len(rows[0])
    assert rows[0][1] == pytest.approx(-1) and rows[0][2] == pytest.approx(-1)
    assert rows[-1][1] == pytest.approx(1) and rows[-1][2] == pytest.approx(1)
    assert max(abs(r[2] - r[1]) for r in rows) < 1e-6
    assert all(math.isnan(r[3]) for r in rows)

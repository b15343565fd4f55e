import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import solve_ivp

from solitonqm.epr_entanglement import LADDER_J
from solitonqm.exceptions import BracketError, InvalidFrequencyError, NormalizationError
from solitonqm.spinor_soliton import (
    BLEW_UP_NEGATIVE,
    BLEW_UP_POSITIVE,
    DECAYED,
    ModelParams,
    RadialGrid,
    RadialProfile,
    angular_matrix_elements,
    decay_constants,
    integrate_profile,
    normalize_profile,
    radial_rhs,
    read_profile,
    resample,
    rhs_residual,
    series_start,
    shoot_ground_state,
    spin_expectation,
    tail_fit,
    write_profile,
)

P09 = ModelParams(ell0=1.0, lam=4 * math.pi, omega=0.9)


def test_model_params_validation():
    for bad in ({"ell0": 0}, {"hbar": -1}, {"c": 0}, {"convention": "other"}):
        with pytest.raises(ValueError):
            ModelParams(**bad)


@pytest.mark.parametrize("omega", [0.0, 1.0, 1.2, -0.3])
def test_frequency_window(omega):
    with pytest.raises(InvalidFrequencyError):
        shoot_ground_state(ModelParams(omega=omega))


@given(st.floats(1.0, 50.0), st.floats(0.1, 5.0))
def test_frequency_window_scales_with_ell0(ratio, ell0):
    with pytest.raises(InvalidFrequencyError):
        ModelParams(ell0=ell0, omega=ratio / ell0).check_frequency()


def test_rhs_zero_field_is_fixed_point():
    assert radial_rhs(1.0, 0.0, 0.0, P09) == (0.0, 0.0)


def test_rhs_linear_case():
    df, dg = radial_rhs(1.0, 1.0, 0.0, ModelParams(omega=0.5, lam=0.0))
    assert df == 0.0
    assert dg == pytest.approx(-0.5, abs=1e-15)


def test_rhs_hand_evaluation():
    # kappa = 1, s = 0.08: dg = -0.05 - 0.1*0.3 + 0.08*0.3, df = -(1.9*0.1 - 0.08*0.1)
    df, dg = radial_rhs(2.0, 0.3, 0.1, P09)
    assert dg == pytest.approx(-0.106, rel=1e-12)
    assert df == pytest.approx(-0.182, rel=1e-12)


def test_rhs_rejects_origin():
    with pytest.raises(ValueError):
        radial_rhs(0.0, 1.0, 0.0, P09)


@given(st.floats(0.05, 5), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 10), st.floats(0.1, 0.99))
def test_rhs_scaling_invariance(r, f, g, s, omega):
    p = ModelParams(omega=omega)
    ps = ModelParams(omega=omega, lam=p.lam / s ** 2)
    df, dg = radial_rhs(r, f, g, p)
    dfs, dgs = radial_rhs(r, s * f, s * g, ps)
    assert dfs == pytest.approx(s * df, rel=1e-9, abs=1e-12 * s)
    assert dgs == pytest.approx(s * dg, rel=1e-9, abs=1e-12 * s)


def test_series_trivial_cases():
    assert series_start(P09, 0.0, 1e-4) == (0.0, 0.0, 0.0)
    f0, g0, c1 = series_start(ModelParams(omega=1.0, lam=0.0), 1.0, 1e-4)
    assert (f0, g0, c1) == (1.0, 0.0, 0.0)


def test_series_matches_fine_integration():
    c2, r0 = 0.5, 1e-4
    f0, g0, c1 = series_start(P09, c2, r0)
    sol = solve_ivp(lambda r, y: radial_rhs(r, y[0], y[1], P09), (r0, 10 * r0), [f0, g0],
                    method="DOP853", rtol=1e-13, atol=1e-16)
    f1, g1, _ = series_start(P09, c2, 10 * r0)
    assert sol.y[0, -1] == pytest.approx(f1, rel=1e-7)
    assert sol.y[1, -1] == pytest.approx(g1, rel=1e-5)


def test_decay_constants_examples():
    d = decay_constants(ModelParams(omega=0.6))
    assert d.nu == pytest.approx(0.8) and d.b_const == pytest.approx(1.6)
    d = decay_constants(ModelParams(omega=1e-9))
    assert d.nu == pytest.approx(1.0) and d.b_const == pytest.approx(1.0)
    d = decay_constants(ModelParams(ell0=2.0, omega=0.25))
    assert d.nu == pytest.approx(math.sqrt(0.1875)) and d.b_const == pytest.approx(0.75)


def test_integrate_zero_amplitude():
    grid = RadialGrid.default(P09)
    prof, outcome, nodes = integrate_profile(P09, 0.0, grid)
    assert outcome == DECAYED and nodes == 0
    assert not np.any(prof.f) and not np.any(prof.g)


def test_integrate_large_amplitude_blows_up():
    _, outcome, _ = integrate_profile(P09, 1e6, RadialGrid.default(P09))
    assert outcome in (BLEW_UP_POSITIVE, BLEW_UP_NEGATIVE)


def test_bracket_has_opposite_signs(ground_state):
    out_lo, out_hi = ground_state.info["bracket_outcomes"]
    assert {out_lo, out_hi} == {BLEW_UP_POSITIVE, BLEW_UP_NEGATIVE}
    lo, hi = ground_state.info["bracket"]
    grid = RadialGrid.default(P09)
    below = integrate_profile(P09, lo * (1 - 1e-9), grid)[1]
    above = integrate_profile(P09, hi * (1 + 1e-9), grid)[1]
    assert below == out_lo and above == out_hi


@pytest.mark.parametrize("omega, c2", [(0.5, 1.3805659238442), (0.7, 1.36148), (0.9, 1.0647717)])
def test_ground_state_regression(shot, omega, c2):
    prof = shot(omega)
    assert prof.c2 == pytest.approx(c2, rel=1e-5)


def test_ground_state_shape(ground_state):
    f = ground_state.f
    assert f[0] > 0
    assert np.all(f > 0)
    peak = int(np.argmax(f))
    assert np.all(np.diff(f[peak:]) < 0)


def test_near_origin_series(ground_state):
    r0 = ground_state.r[0]
    assert ground_state.f[0] == pytest.approx(ground_state.c2, rel=1e-12)
    assert ground_state.g[0] / r0 == pytest.approx(ground_state.c1, rel=1e-12)


def test_rhs_residual_small(ground_state):
    assert rhs_residual(ground_state) < 1e-3


def test_tail_law(ground_state):
    fit = tail_fit(ground_state)
    nu = decay_constants(P09).nu
    assert abs(fit.nu - nu) / nu < 0.02
    assert fit.g_deviation < 0.01


def test_tail_fit_exact_model():
    r = np.linspace(0.5, 30, 3000)
    f = np.exp(-0.8 * r) / r
    prof = RadialProfile(RadialGrid(r), f, 0.0 * f, 0.0, 0.0, 1.0)
    fit = tail_fit(prof, (5.0, 25.0), b_const=1.0)
    assert fit.nu == pytest.approx(0.8, abs=1e-6)
    assert fit.a_tail == pytest.approx(1.0, abs=1e-6)


def test_tail_fit_window_checks(ground_state):
    with pytest.raises(ValueError):
        tail_fit(ground_state, (-1.0, 5.0))


def test_normalization_is_hbar(normalized):
    assert normalized.norm == pytest.approx(normalized.params.hbar, rel=1e-12)


def test_normalization_idempotent(normalized):
    again, params = normalize_profile(normalized)
    assert np.array_equal(again.f, normalized.f)
    assert params.lam == normalized.params.lam


def test_normalize_quadruple_norm(normalized):
    big = normalized.scaled(2.0)
    assert big.norm == pytest.approx(4.0 * normalized.params.hbar)
    back, params = normalize_profile(big)
    np.testing.assert_allclose(back.f, normalized.f, rtol=1e-14)
    assert params.lam == pytest.approx(4.0 * normalized.params.lam)


def test_normalized_profile_reintegrates(ground_state, normalized):
    prof, _, _ = integrate_profile(normalized.params, normalized.c2, ground_state.grid)
    keep = prof.r <= 0.8 * ground_state.trusted_radius
    np.testing.assert_allclose(prof.f[keep], normalized.f[: keep.sum()], rtol=1e-6, atol=1e-12)


def test_scaled_profile_residual(ground_state):
    prof, params = normalize_profile(ground_state)
    assert rhs_residual(prof, params) == pytest.approx(rhs_residual(ground_state), rel=1e-6)


def test_norm_grid_refinement(ground_state):
    fine = resample(ground_state, ground_state.grid.refined())
    assert abs(fine.norm - ground_state.norm) / ground_state.norm < 1e-8


def test_spin_closed_form(normalized, ground_state):
    s = spin_expectation(normalized)
    assert s[2] == pytest.approx(0.5, abs=1e-12)
    assert s[0] == 0 and s[1] == 0
    with pytest.raises(NormalizationError):
        spin_expectation(ground_state)
    scaled = spin_expectation(normalized.scaled(3.0), require_normalized=False)
    assert scaled[2] == pytest.approx(9.0 * s[2])


def test_angular_matrix_elements():
    gram, jm = angular_matrix_elements()
    for p in (0, 1):
        np.testing.assert_allclose(gram[p], np.eye(2) / 1.0, atol=1e-12)
        np.testing.assert_allclose(jm[p], LADDER_J, atol=1e-10)


def test_profile_round_trip(tmp_path, ground_state):
    path, meta = write_profile(ground_state, tmp_path / "p.csv")
    assert path.read_text().splitlines()[0] == "r,f,g"
    back = read_profile(path)
    np.testing.assert_array_equal(back.f, ground_state.f)
    assert back.c2 == ground_state.c2 and back.norm == ground_state.norm
    assert back.params.omega == 0.9


def test_displayed_convention_has_no_soliton():
    with pytest.raises(BracketError):
        shoot_ground_state(ModelParams(omega=0.9, convention="displayed"))

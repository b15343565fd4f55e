import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from solitonqm.estimators import DichotomicEncoder, PhaseExtractor, SolitonSolver
from solitonqm.exceptions import InvalidFrequencyError
from solitonqm.random_ensemble import BumpProfile, LineGrid


def test_solver_fit_predict(normalized):
    est = SolitonSolver(tolerance=1e-12).fit()
    assert est.c2_ == pytest.approx(normalized.c2, rel=1e-6)
    assert est.nu_ == pytest.approx(math.sqrt(1 - 0.81), rel=1e-10)
    fg = est.predict([0.0, 1.0, 50.0])
    assert fg.shape == (3, 2)
    assert fg[0, 0] == pytest.approx(est.profile_.f[0], rel=1e-3)
    assert fg[2, 0] < 1e-6


def test_solver_params_and_clone():
    est = SolitonSolver(omega=0.7)
    assert est.get_params()["omega"] == 0.7
    c = clone(est).set_params(omega=0.5)
    assert c.omega == 0.5 and est.omega == 0.7
    with pytest.raises(NotFittedError):
        est.predict([1.0])


def test_solver_rejects_bad_frequency():
    with pytest.raises(InvalidFrequencyError):
        SolitonSolver(omega=1.5).fit()


def test_extractor_and_encoder_pipeline():
    grid = LineGrid(-3, 3, 192)
    bump = BumpProfile()
    thetas = [0.7, -1.2]
    X = np.array([bump.field(grid.points - 0.2, t) for t in thetas])
    feats = PhaseExtractor().fit_transform(X)
    np.testing.assert_allclose(feats[:, 2], [-0.7, 1.2], atol=1e-12)
    np.testing.assert_allclose(feats[:, 1], 1.0, rtol=1e-6)
    enc = DichotomicEncoder(thetas=[0.0, math.pi / 2]).fit()
    signs = enc.transform(feats[:, 2])
    assert signs.shape == (2, 2)
    np.testing.assert_array_equal(signs, [[1, 1], [1, -1]])


def test_encoder_validation():
    with pytest.raises(ValueError):
        DichotomicEncoder(thetas=[]).fit()
    with pytest.raises(NotFittedError):
        PhaseExtractor().transform(np.ones((1, 193)))


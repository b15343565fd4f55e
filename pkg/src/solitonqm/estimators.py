"""scikit-learn style wrappers around the functional API."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .random_ensemble import BumpProfile, LineGrid
from .spinor_soliton import (
    ModelParams,
    RadialGrid,
    ShootingConfig,
    normalize_profile,
    shoot_ground_state,
)
from .stochastic_qubit import dichotomic_sample, most_probable_center


class SolitonSolver(BaseEstimator):
    """Ground-state radial profile for fixed model constants.

    ``fit`` takes no data; it runs the shooting solve and stores ``profile_``
    (normalized to ``hbar`` when ``normalize``), ``c2_`` and ``nu_``.
    """

    def __init__(self, ell0: float = 1.0, lam: float = 4 * math.pi, omega: float = 0.9,
                 hbar: float = 1.0, c: float = 1.0, normalize: bool = True,
                 spacing: float = 0.01, tolerance: float = 1e-13):
        self.ell0 = ell0
        self.lam = lam
        self.omega = omega
        self.hbar = hbar
        self.c = c
        self.normalize = normalize
        self.spacing = spacing
        self.tolerance = tolerance

    def fit(self, X=None, y=None):
        params = ModelParams(ell0=self.ell0, lam=self.lam, omega=self.omega, hbar=self.hbar, c=self.c)
        params.check_frequency()
        grid = RadialGrid.default(params, spacing=self.spacing)
        prof = shoot_ground_state(params, ShootingConfig(tolerance=self.tolerance), grid)
        self.raw_profile_ = prof
        self.profile_, self.params_ = normalize_profile(prof) if self.normalize else (prof, params)
        self.c2_ = self.profile_.c2
        self.nu_ = self.profile_.tail.nu
        return self

    def predict(self, r) -> np.ndarray:
        """``(f(r), g(r))`` columns, interpolated on the profile grid."""
        check_is_fitted(self, "profile_")
        r = np.asarray(r, dtype=float).ravel()
        p = self.profile_
        return np.column_stack([np.interp(r, p.r, p.f), np.interp(r, p.r, p.g)])


class PhaseExtractor(BaseEstimator, TransformerMixin):
    """Rows of trial fields on a common grid -> ``(center, modulus, arg)``."""

    def __init__(self, lo: float = -3.0, hi: float = 3.0, n_intervals: int = 192,
                 support_radius: float = 0.5, power: int = 6, hbar: float = 1.0,
                 refine: str = "parabolic"):
        self.lo = lo
        self.hi = hi
        self.n_intervals = n_intervals
        self.support_radius = support_radius
        self.power = power
        self.hbar = hbar
        self.refine = refine

    def fit(self, X=None, y=None):
        self.grid_ = LineGrid(self.lo, self.hi, self.n_intervals)
        self.etalon_ = BumpProfile(1, self.support_radius, self.power, self.hbar)
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "grid_")
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        out = np.empty((X.shape[0], 3))
        for i, row in enumerate(X):
            e = most_probable_center(row, self.grid_, self.etalon_, refine=self.refine)
            out[i] = (e.best_center, e.overlap_modulus, e.overlap_arg)
        return out


class DichotomicEncoder(BaseEstimator, TransformerMixin):
    """Phases (one column) -> ``sign cos(phi + theta_s)`` for each ``theta_s``."""

    def __init__(self, thetas: Sequence[float] = (0.0,)):
        self.thetas = thetas

    def fit(self, X=None, y=None):
        self.thetas_ = np.asarray(self.thetas, dtype=float).ravel()
        if self.thetas_.size < 1:
            raise ValueError("need at least one theta")
        return self

    def transform(self, X) -> np.ndarray:
        check_is_fitted(self, "thetas_")
        phi = np.asarray(X, dtype=float).reshape(-1, 1)
        return dichotomic_sample(phi, self.thetas_[None, :])

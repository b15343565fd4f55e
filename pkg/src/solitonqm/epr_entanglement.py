"""Singlet spin correlations: Pauli algebra and the entangled soliton pair.

The pair is stored factored: a spin 4-vector in the basis
``(up-up, up-down, down-up, down-down)`` times one radial profile shared by
both solitons.  On the ``m = +-1/2`` soliton states the total angular
momentum acts through the ladder relations

    J_z phi_up = +phi_up / 2,   J_+ phi_up = 0,   J_- phi_up = phi_down,

so ``<phi_s| 2 J.a |phi_t> = N1 (sigma.a)_st`` with ``N1 = int r^2 (f^2 + g^2)``.
With ``Psi`` carrying ``(hbar^2 N)^(-1/2)`` the correlation is

    P'(a, b) = -(a.b) N1^2 / hbar^2.

The Monte-Carlo estimator puts independent uniform global phases ``chi_j`` on
``N`` copies of the pair, so ``P'_N = P' |sum_j exp(i chi_j)|^2 / N``; its
expectation is ``P'`` and it is averaged over independent phase draws.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._rng import DEFAULT_SEED, blocks, ordered_sum, pmap, substream
from .exceptions import NormalizationError
from .spinor_soliton import RadialProfile

SIGMA = np.array([[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex)
SWAP = np.eye(4)[[0, 2, 1, 3]]

# ladder-operator action on (up, down) labels
J_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
J_MINUS = J_PLUS.T.copy()
J_Z = np.diag([0.5, -0.5]).astype(complex)
LADDER_J = np.array([0.5 * (J_PLUS + J_MINUS), -0.5j * (J_PLUS - J_MINUS), J_Z])

MIN_MC_TRIALS = 1000


def direction(v: Sequence[float], tol: float = 1e-12) -> np.ndarray:
    """Validated unit 3-vector."""
    a = np.asarray(v, dtype=float).reshape(3)
    if abs(np.linalg.norm(a) - 1.0) > tol:
        raise ValueError(f"direction {a} is not a unit vector")
    return a


def coplanar_direction(theta: float) -> np.ndarray:
    """Unit vector at angle ``theta`` from z in the x-z plane."""
    return np.array([math.sin(theta), 0.0, math.cos(theta)])


@dataclass(frozen=True, eq=False)
class SpinPairState:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(4)
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise ValueError("spin pair state must have unit norm")
        object.__setattr__(self, "amplitudes", amp)

    def swapped(self) -> "SpinPairState":
        """Exchange particle labels."""
        return SpinPairState(SWAP @ self.amplitudes)

    def expectation(self, op: np.ndarray) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))


def singlet_state() -> SpinPairState:
    s = 1.0 / math.sqrt(2.0)
    return SpinPairState(np.array([0.0, s, -s, 0.0]))


def pauli_dot(a: np.ndarray) -> np.ndarray:
    return np.tensordot(a, SIGMA, axes=(0, 0))


def qm_spin_correlation(a, b, state: Optional[SpinPairState] = None) -> float:
    """``psi^+ (sigma.a) x (sigma.b) psi`` from explicit Pauli matrices."""
    a, b = direction(a), direction(b)
    state = state or singlet_state()
    return float(state.expectation(np.kron(pauli_dot(a), pauli_dot(b))).real)


@dataclass(frozen=True, eq=False)
class EntangledPair:
    spin_part: SpinPairState
    radial_profile: RadialProfile
    norm_pair: float
    hbar: float = 1.0

    @property
    def radial_integral(self) -> float:
        return self.radial_profile.norm


def build_entangled_pair(profile: RadialProfile, hbar: Optional[float] = None,
                         require_normalized: bool = True, tolerance: float = 1e-6) -> EntangledPair:
    """Singlet spin part times two copies of ``profile``.

    ``norm_pair`` is the six-dimensional integral of ``|phi_12|^2``: the spin
    part has unit norm and the orbital factors are separable, giving
    ``N1^2``.
    """
    if hbar is None:
        hbar = profile.params.hbar if profile.params is not None else 1.0
    n1 = profile.norm
    if not n1 > 0:
        raise NormalizationError("profile has zero norm")
    if require_normalized and abs(n1 - hbar) / hbar > tolerance:
        raise NormalizationError(f"profile norm {n1!r} differs from hbar={hbar!r}; normalize first")
    spin = singlet_state()
    norm_pair = float(np.vdot(spin.amplitudes, spin.amplitudes).real) * n1 * n1
    return EntangledPair(spin, profile, norm_pair, hbar)


def soliton_spin_operator(a: np.ndarray) -> np.ndarray:
    """``2 J.a`` on the soliton (up, down) states, from the ladder relations."""
    return 2.0 * np.tensordot(a, LADDER_J, axes=(0, 0))


def soliton_spin_correlation_exact(pair: EntangledPair, a, b) -> float:
    a, b = direction(a), direction(b)
    n1 = pair.radial_integral
    op = np.kron(soliton_spin_operator(a), soliton_spin_operator(b))
    return float(pair.spin_part.expectation(op).real) * n1 * n1 / (pair.hbar ** 2)


@dataclass(frozen=True, eq=False)
class SingletEnsemble:
    pair: EntangledPair
    phases: np.ndarray

    @property
    def n_trials(self) -> int:
        return self.phases.size


def sample_singlet_ensemble(pair: EntangledPair, n_trials: int, seed: int = DEFAULT_SEED,
                            replica: int = 0) -> SingletEnsemble:
    rng = substream(seed, "epr:phases", replica)
    return SingletEnsemble(pair, 2.0 * math.pi * rng.random(n_trials))


def phase_factor(phases: np.ndarray) -> float:
    """``|sum_j exp(i chi_j)|^2 / N``: diagonal terms give 1, cross terms average to 0."""
    s = np.exp(1j * np.asarray(phases)).sum()
    return float((s * s.conjugate()).real) / phases.size


@dataclass
class MCCorrelation:
    estimate: float
    std_error: float
    exact: float
    n_trials: int
    n_replicas: int
    flagged: bool

    def __iter__(self):
        yield self.estimate
        yield self.std_error


def soliton_spin_correlation_mc(pair: EntangledPair, a, b, n_trials: int = 10_000,
                                n_replicas: int = 200, seed: int = DEFAULT_SEED,
                                workers: int = 1, phases: Optional[np.ndarray] = None,
                                block_size: int = 16) -> MCCorrelation:
    """Phase-averaged correlation over ``n_replicas`` independent ensembles.

    ``phases`` fixes the same phase sequence for every replica (used to show
    the bias of non-random phases).  ``flagged`` marks estimates farther than
    three standard errors from the exact value, or a degenerate zero spread.
    """
    if n_trials < MIN_MC_TRIALS:
        raise ValueError(f"n_trials must be >= {MIN_MC_TRIALS}")
    if n_replicas < 2:
        raise ValueError("n_replicas must be >= 2")
    exact = soliton_spin_correlation_exact(pair, a, b)

    if phases is not None:
        fixed = np.asarray(phases, dtype=float).ravel()
        if fixed.size != n_trials:
            raise ValueError("phases must have length n_trials")
        vals = np.full(n_replicas, phase_factor(fixed))
    else:
        def one(blk):
            _, start, stop = blk
            return np.array([phase_factor(sample_singlet_ensemble(pair, n_trials, seed, r).phases)
                             for r in range(start, stop)])

        vals = np.concatenate(pmap(one, blocks(n_replicas, block_size), workers))
    est_vals = exact * vals
    est = float(ordered_sum(list(est_vals)) / n_replicas)
    se = float(np.std(est_vals, ddof=1) / math.sqrt(n_replicas))
    flagged = bool(se == 0.0 and est != exact) or (se > 0 and abs(est - exact) > 3 * se)
    return MCCorrelation(est, se, exact, n_trials, n_replicas, flagged)


CURVE_HEADER = ("theta", "qm", "soliton_exact", "soliton_mc", "mc_stderr")


def correlation_curve(pair: EntangledPair, angles: Sequence[float], with_mc: bool = False,
                      n_trials: int = 10_000, n_replicas: int = 200, seed: int = DEFAULT_SEED,
                      workers: int = 1) -> list[tuple]:
    """Rows ``(theta, qm, soliton_exact, soliton_mc, mc_stderr)``.

    Directions are ``z`` and ``z`` tilted by ``theta`` in the x-z plane.  The
    Monte-Carlo columns are NaN unless ``with_mc``.
    """
    rows = []
    a = coplanar_direction(0.0)
    for i, th in enumerate(angles):
        b = coplanar_direction(float(th))
        qm = qm_spin_correlation(a, b)
        ex = soliton_spin_correlation_exact(pair, a, b)
        if with_mc:
            mc = soliton_spin_correlation_mc(pair, a, b, n_trials, n_replicas,
                                             seed=seed + i, workers=workers)
            rows.append((float(th), qm, ex, mc.estimate, mc.std_error))
        else:
            rows.append((float(th), qm, ex, math.nan, math.nan))
    return rows

"""Random-phase qubit surrogates: phase extraction, dichotomic variables, gates.

A trial field is matched against a reference (etalon) profile by maximizing
``|int conj(field(x)) phi(x - d) dx|`` over the shift ``d``; the argument of
the overlap at the maximizer is the trial's phase contribution.  For a field
``exp(i theta0) phi(x - d0)`` this argument is ``-theta0`` because the trial
field enters conjugated.

Dichotomic variables ``f = sign cos(Phi + theta)`` with uniform ``Phi`` have
the piecewise-linear correlation ``1 - (2/pi) |dtheta|`` (``dtheta`` wrapped
into ``[-pi, pi]``), which never exceeds the local bound 2 in the CHSH
functional; the cosine correlation reaches ``2 sqrt 2``.

:class:`ProbBit` stores signed amplitudes exactly as ``(p, q) * 2^(-k/2)``
with rational ``p, q`` and ``k`` in ``{0, 1}``, so Hadamard and CNOT identities
hold without rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from ._rng import DEFAULT_SEED, blocks, pmap, substream
from .exceptions import NormalizationError
from .random_ensemble import BumpProfile, LineGrid, TrialBatch, as_batch

TWO_PI = 2.0 * math.pi

#: the reference profile of the phase matching is a normalized bump
EtalonProfile = BumpProfile


def wrap_angle(x):
    """Map into ``[-pi, pi]`` (IEEE remainder, odd in ``x``)."""
    if np.ndim(x) == 0:
        return math.remainder(float(x), TWO_PI)
    return np.vectorize(lambda v: math.remainder(v, TWO_PI), otypes=[float])(x)


# --------------------------------------------------------------------------
# phase extraction
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseExtraction:
    best_center: float
    overlap_modulus: float
    overlap_arg: float


def overlap(field: np.ndarray, grid: LineGrid, etalon: EtalonProfile, d: float) -> complex:
    """``int conj(field) phi(x - d) dx`` by the trapezoid rule."""
    ref = etalon.field(grid.points - d)
    return complex(np.sum(grid.weights() * np.conj(field) * ref))


def most_probable_center(field, grid: LineGrid, etalon: EtalonProfile, refine: str = "parabolic",
                         search: Optional[tuple[float, float]] = None) -> PhaseExtraction:
    """Shift maximizing the overlap modulus, and the overlap's argument there.

    The coarse scan evaluates all grid shifts at once as a cross-correlation
    (shift resolution = grid step).  ``parabolic`` fits a parabola through the
    best scan point and its neighbours; ``golden`` runs a bounded scalar
    maximization between them.
    """
    if refine not in ("parabolic", "golden", "none"):
        raise ValueError("refine must be 'parabolic', 'golden' or 'none'")
    if etalon.dimension != 1:
        raise ValueError("phase extraction works on one-dimensional fields")
    field = np.asarray(field, dtype=complex)
    if field.shape != (grid.size,):
        raise ValueError("field must be sampled on the grid")
    if not np.any(field != 0):
        raise NormalizationError("cannot match an all-zero field")
    h = grid.h
    r = etalon.support_radius
    m = int(math.ceil(r / h))
    ref = etalon.field(h * np.arange(-m, m + 1))           # phi(x - d) sampled around d
    w = grid.weights()
    # scan[i] = sum_x conj(field(x)) w(x) phi(x - x_i)
    if ref.size > grid.size:
        raise ValueError("grid shorter than the etalon support")
    scan = np.correlate(np.conj(field) * w, np.conj(ref), mode="same")
    lo, hi = (grid.lo, grid.hi) if search is None else search
    pts = grid.points
    allowed = (pts >= lo) & (pts <= hi)
    mod = np.where(allowed, np.abs(scan), -1.0)
    i = int(np.argmax(mod))
    d = float(pts[i])
    if refine == "parabolic" and 0 < i < grid.size - 1:
        y0, y1, y2 = np.abs(scan[i - 1]), np.abs(scan[i]), np.abs(scan[i + 1])
        den = y0 - 2 * y1 + y2
        if den < 0:
            d = float(pts[i] + 0.5 * h * (y0 - y2) / den)
    elif refine == "golden":
        res = optimize.minimize_scalar(
            lambda s: -abs(overlap(field, grid, etalon, s)),
            bounds=(float(pts[max(i - 1, 0)]), float(pts[min(i + 1, grid.size - 1)])),
            method="bounded", options={"xatol": 1e-12 * max(1.0, abs(d))},
        )
        d = float(res.x)
    ov = overlap(field, grid, etalon, d)
    return PhaseExtraction(d, abs(ov), math.atan2(ov.imag, ov.real))


def random_phase(extractions: Sequence[PhaseExtraction]) -> float:
    """Sum of overlap arguments reduced into ``[0, 2 pi)``."""
    total = math.fsum(e.overlap_arg for e in extractions)
    return total % TWO_PI


# --------------------------------------------------------------------------
# dichotomic variables
# --------------------------------------------------------------------------

def dichotomic_sample(phi, theta_s):
    """``sign cos(phi + theta_s)`` with ``sign(0) = +1``."""
    c = np.cos(np.asarray(phi, dtype=float) + np.asarray(theta_s, dtype=float))
    out = np.where(c >= 0, 1, -1)
    return int(out) if out.ndim == 0 else out


def triangle_correlation(dtheta) -> float | np.ndarray:
    """``1 - (2/pi) |dtheta|`` with ``dtheta`` wrapped into ``[-pi, pi]``."""
    return 1.0 - (2.0 / math.pi) * np.abs(wrap_angle(dtheta))


def uniform_phases(n: int, seed: int, tag: str = "qubit:phases", workers: int = 1,
                   block_size: int = 1 << 14) -> np.ndarray:
    def one(blk):
        b, start, stop = blk
        return TWO_PI * substream(seed, tag, b).random(stop - start)

    return np.concatenate(pmap(one, blocks(n, block_size), workers))


class CorrelationEstimate(tuple):
    """``(estimate, std_error, analytic)``."""

    def __new__(cls, estimate, std_error, analytic):
        return super().__new__(cls, (float(estimate), float(std_error), float(analytic)))

    estimate = property(lambda s: s[0])
    std_error = property(lambda s: s[1])
    analytic = property(lambda s: s[2])


def _estimate(prod: np.ndarray) -> tuple[float, float]:
    n = prod.size
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def dichotomic_correlation(theta1: float, theta2: float, n_samples: int = 100_000,
                           seed: int = DEFAULT_SEED, phases: Optional[np.ndarray] = None,
                           workers: int = 1) -> CorrelationEstimate:
    """Sample mean of ``f(theta1) f(theta2)`` over uniform phases, with the triangle law."""
    if phases is None:
        if n_samples < 1000:
            raise ValueError("n_samples must be >= 1000")
        phases = uniform_phases(n_samples, seed, workers=workers)
    t1 = wrap_angle(theta1)
    t2 = wrap_angle(theta2)
    prod = dichotomic_sample(phases, t1) * dichotomic_sample(phases, t2)
    mean, se = _estimate(prod)
    return CorrelationEstimate(mean, se, triangle_correlation(float(theta2) - float(theta1)))


# --------------------------------------------------------------------------
# CHSH
# --------------------------------------------------------------------------

CHSH_MODELS = ("triangle", "qm_cosine")


def model_correlation(model: str, a, b):
    """``E(a, b)``: triangle law, or ``-cos(a - b)`` for the singlet cosine."""
    if model == "triangle":
        return triangle_correlation(np.asarray(b) - np.asarray(a))
    if model == "qm_cosine":
        return -np.cos(np.asarray(a) - np.asarray(b))
    raise ValueError(f"unknown model {model!r}; choose from {CHSH_MODELS}")


def chsh_value(model: str, a: float, a2: float, b: float, b2: float) -> float:
    e = lambda x, y: float(model_correlation(model, x, y))
    return e(a, b) - e(a, b2) + e(a2, b) + e(a2, b2)


@dataclass
class CHSHResult:
    model: str
    max_S: float
    argmax_angles: tuple
    resolution: int
    grid_max: float
    grid_argmax: tuple


def chsh_scan(model: str, grid_resolution: int = 128, refine: bool = True,
              workers: int = 1) -> CHSHResult:
    """Maximize ``|E(a,b) - E(a,b') + E(a',b) + E(a',b')|`` over four angles.

    The full grid ``(2 pi i / res)^4`` is scanned exactly: ``E`` depends on
    angle differences only, and for fixed ``(a, a')`` the functional splits
    into a term in ``b`` plus a term in ``b'``.  Ties go to the
    lexicographically smallest index tuple.  Nelder-Mead then polishes the
    best grid point.
    """
    if model not in CHSH_MODELS:
        raise ValueError(f"unknown model {model!r}; choose from {CHSH_MODELS}")
    res = int(grid_resolution)
    if res < 64:
        raise ValueError("grid_resolution must be >= 64")
    ang = TWO_PI * np.arange(res) / res
    table = np.asarray(model_correlation(model, 0.0, -ang), dtype=float)   # E(a, b) = table[(a - b) % res]
    idx = np.arange(res)

    def chunk(a_range):
        best = (-1.0, None)
        for ia in a_range:
            col_a = table[(ia - idx) % res]              # E(a, b) over b
            for ia2 in range(res):
                col_a2 = table[(ia2 - idx) % res]
                u = col_a + col_a2                        # b term
                v = col_a2 - col_a                        # b' term
                ib, ib2 = int(np.argmax(u)), int(np.argmax(v))
                s_plus = u[ib] + v[ib2]
                jb, jb2 = int(np.argmin(u)), int(np.argmin(v))
                s_minus = -(u[jb] + v[jb2])
                cand = [(s_plus, (ia, ia2, ib, ib2)), (s_minus, (ia, ia2, jb, jb2))]
                for s, tup in cand:
                    if s > best[0] or (s == best[0] and best[1] is not None and tup < best[1]):
                        best = (float(s), tup)
        return best

    chunks = [range(s, e) for _, s, e in blocks(res, max(1, res // 8))]
    parts = pmap(chunk, chunks, workers)
    best = parts[0]
    for p in parts[1:]:
        if p[0] > best[0]:
            best = p
    grid_max, tup = best
    grid_angles = tuple(float(ang[i]) for i in tup)
    max_s, angles = grid_max, grid_angles
    if refine:
        fun = lambda x: -abs(chsh_value(model, *x))
        opt = optimize.minimize(fun, np.array(grid_angles), method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000})
        if -opt.fun > max_s:
            max_s, angles = float(-opt.fun), tuple(float(v) for v in opt.x)
    return CHSHResult(model, max_s, angles, res, grid_max, grid_angles)


# --------------------------------------------------------------------------
# probabilistic bits
# --------------------------------------------------------------------------

def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class ProbBit:
    """Signed amplitudes ``(p, q) / sqrt(2)^k`` on ``|0>``, ``|1>``."""

    p: Fraction
    q: Fraction
    k: int = 0

    def __post_init__(self):
        p, q, k = _frac(self.p), _frac(self.q), int(self.k)
        if k < 0:
            raise ValueError("k must be >= 0")
        while k >= 2:
            p, q, k = p / 2, q / 2, k - 2
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "k", k)
        if self.norm_squared != 1:
            raise ValueError(f"amplitudes ({self.amplitudes}) are not normalized")

    @classmethod
    def from_amplitudes(cls, alpha: float, beta: float, tol: float = 1e-12) -> "ProbBit":
        """From floats.  Inputs whose rational norm is not exactly 1 are moved
        to the nearest rational point of the unit circle (error ~1e-12)."""
        fa, fb = Fraction(alpha), Fraction(beta)
        n2 = fa * fa + fb * fb
        if abs(float(n2) - 1.0) > tol:
            raise ValueError("amplitudes are not normalized")
        if n2 == 1:
            return cls(fa, fb)
        sign = -1 if alpha < 0 else 1
        # rational parametrization of the circle, t = tan(angle / 2)
        t = Fraction(math.tan(0.5 * math.atan2(sign * beta, sign * alpha))).limit_denominator(10**12)
        return cls(sign * (1 - t * t) / (1 + t * t), sign * 2 * t / (1 + t * t))

    @classmethod
    def at_angle(cls, angle: float) -> "ProbBit":
        return cls.from_amplitudes(math.cos(angle), math.sin(angle), tol=1e-9)

    @property
    def norm_squared(self) -> Fraction:
        return (self.p * self.p + self.q * self.q) / (2 ** self.k)

    @property
    def amplitudes(self) -> tuple[float, float]:
        s = math.sqrt(2.0) ** -self.k
        return float(self.p) * s, float(self.q) * s

    @property
    def probabilities(self) -> tuple[Fraction, Fraction]:
        return self.p * self.p / 2 ** self.k, self.q * self.q / 2 ** self.k

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.random() >= float(self.probabilities[0]))


ZERO = ProbBit(1, 0)
ONE = ProbBit(0, 1)
PLUS = ProbBit(1, 1, 1)
MINUS = ProbBit(1, -1, 1)


def hadamard(bit: ProbBit) -> ProbBit:
    return ProbBit(bit.p + bit.q, bit.p - bit.q, bit.k + 1)


def cnot(control: int, target: ProbBit) -> ProbBit:
    """Flip the target when the (sampled) control value is 1."""
    if control not in (0, 1):
        raise ValueError("control must be a sampled value 0 or 1")
    if control == 1:
        return ProbBit(target.q, target.p, target.k)
    return target


@dataclass(frozen=True)
class BitRegister:
    bits: tuple
    values: tuple
    signal: int

    def __post_init__(self):
        if len(self.bits) < 1:
            raise ValueError("register needs at least one bit")


DEFAULT_SIGNAL_RULE = {+1: 0, -1: 1}


def initialize_register(n_bits: int, signal_rule: Mapping[int, int] = DEFAULT_SIGNAL_RULE,
                        rng: Optional[np.random.Generator] = None,
                        forced_signal: Optional[int] = None) -> BitRegister:
    """All bits set from one signal variable: ``+1`` (green) and ``-1`` (red) map by ``signal_rule``."""
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    if forced_signal is None:
        rng = rng or substream(DEFAULT_SEED, "qubit:signal", 0)
        signal = dichotomic_sample(TWO_PI * rng.random(), 0.0)
    else:
        if forced_signal not in (-1, 1):
            raise ValueError("forced_signal must be +1 or -1")
        signal = forced_signal
    value = signal_rule[signal]
    bit = ZERO if value == 0 else ONE
    return BitRegister((bit,) * n_bits, (value,) * n_bits, int(signal))


# --------------------------------------------------------------------------
# end-to-end pipeline
# --------------------------------------------------------------------------

@dataclass
class PipelineResult:
    rows: list
    phases: np.ndarray
    uniformity_pvalue: float
    uniform: bool


TABLE_HEADER = ("theta1", "theta2", "analytic", "estimate", "stderr")


def extract_trial_phases(trials, etalon: EtalonProfile, per_radius: int = 16,
                         refine: str = "parabolic") -> np.ndarray:
    """Per-trial ``Phi_j`` from a local grid around every soliton."""
    batch: TrialBatch = as_batch(trials)
    if batch.dimension != 1:
        raise ValueError("phase extraction works on one-dimensional trials")
    r = etalon.support_radius
    h = r / per_radius
    out = np.empty(len(batch))
    for j in range(len(batch)):
        ex = []
        for k in range(batch.n_particles):
            c = float(batch.centers[j, k, 0])
            c0 = h * round(c / h)
            grid = LineGrid(c0 - 3 * r, c0 + 3 * r, 6 * per_radius)
            kv = None if batch.wavevectors is None else batch.wavevectors[k]
            fld = etalon.field(grid.points - c, batch.phases[j, k], kv)
            ex.append(most_probable_center(fld, grid, etalon, refine=refine))
        out[j] = random_phase(ex)
    return out


def end_to_end_phase_pipeline(trials, etalon: EtalonProfile, thetas: Sequence[float]) -> PipelineResult:
    """Extracted phases -> dichotomic samples -> correlation table for all theta pairs.

    ``uniform`` reports a Kolmogorov-Smirnov test of the phases against the
    uniform law at the 1% level.
    """
    phases = extract_trial_phases(trials, etalon)
    rows = []
    thetas = [float(t) for t in thetas]
    for i, t1 in enumerate(thetas):
        for t2 in thetas[i:]:
            est = dichotomic_correlation(t1, t2, phases=phases)
            rows.append((t1, t2, est.analytic, est.estimate, est.std_error))
    pval = float(stats.kstest(phases / TWO_PI, "uniform").pvalue) if phases.size > 1 else 0.0
    return PipelineResult(rows, phases, pval, pval > 0.01)

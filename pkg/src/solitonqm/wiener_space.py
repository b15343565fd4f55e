"""Random inner products and the complex Brownian representation on ``[0, 1]``.

Functions live on the uniform partition ``s_m = m / M``.  The stochastic
integral of ``psi`` against ``z = (x + i y) / sqrt(2)``, with ``x``, ``y``
independent standard Brownian paths, is the left-point (Ito) sum

    I[psi] = sum_m psi(s_m) (z(s_{m+1}) - z(s_m)),

so ``E |I[psi]|^2`` equals the left Riemann sum of ``|psi|^2`` exactly; the
Monte-Carlo check compares the two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import DEFAULT_BLOCK, DEFAULT_SEED, blocks, ordered_sum, pmap, substream
from .exceptions import GridMismatchError

DEFAULT_INTERVALS = 1024


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Values of a function at the ``M + 1`` points ``m / M``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("need a 1-D array of at least two samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("function values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, fn: Callable[[np.ndarray], np.ndarray], n_intervals: int = DEFAULT_INTERVALS):
        s = np.arange(n_intervals + 1) / n_intervals
        return cls(np.broadcast_to(np.asarray(fn(s), dtype=complex), s.shape).copy())

    @property
    def n_intervals(self) -> int:
        return self.values.size - 1

    @property
    def s_grid(self) -> np.ndarray:
        return np.arange(self.values.size) / self.n_intervals

    @property
    def step(self) -> float:
        return 1.0 / self.n_intervals

    def norm_squared(self) -> float:
        """Left Riemann sum of ``|psi|^2``."""
        return float(np.sum(np.abs(self.values[:-1]) ** 2) * self.step)

    def __mul__(self, c) -> "SampledFunction":
        return SampledFunction(self.values * c)

    __rmul__ = __mul__


def _same_grid(a: SampledFunction, b: SampledFunction) -> None:
    if a.values.size != b.values.size:
        raise GridMismatchError(f"grids differ: {a.n_intervals} vs {b.n_intervals} intervals")


@dataclass(frozen=True)
class HermitianDecomposition:
    g_part: float
    omega_part: float

    @property
    def inner_product(self) -> complex:
        return complex(self.g_part, -self.omega_part)


def inner_product(psi1: SampledFunction, psi2: SampledFunction) -> complex:
    """Left-point ``<psi1|psi2> = sum conj(psi1) psi2 ds``."""
    _same_grid(psi1, psi2)
    return complex(np.sum(np.conj(psi1.values[:-1]) * psi2.values[:-1]) * psi1.step)


def hermitian_decompose(psi1: SampledFunction, psi2: SampledFunction) -> HermitianDecomposition:
    """Split ``<psi1|psi2> = G - i Omega`` into a symmetric and an antisymmetric form."""
    _same_grid(psi1, psi2)
    h = psi1.step
    u1, v1 = psi1.values[:-1].real, psi1.values[:-1].imag
    u2, v2 = psi2.values[:-1].real, psi2.values[:-1].imag
    g = (np.dot(u1, u2) + np.dot(v1, v2)) * h
    om = (np.dot(v1, u2) - np.dot(u1, v2)) * h
    return HermitianDecomposition(float(g), float(om))


# --------------------------------------------------------------------------
# Brownian paths
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BrownianPath:
    values: np.ndarray
    label: float = 0.0

    @property
    def n_intervals(self) -> int:
        return self.values.size - 1

    @property
    def s_grid(self) -> np.ndarray:
        return np.arange(self.values.size) / self.n_intervals


@dataclass(frozen=True, eq=False)
class ComplexBrownianPath:
    x_path: BrownianPath
    y_path: BrownianPath

    def __post_init__(self):
        if self.x_path.values.size != self.y_path.values.size:
            raise GridMismatchError("x and y paths use different grids")

    @property
    def values(self) -> np.ndarray:
        return (self.x_path.values + 1j * self.y_path.values) / math.sqrt(2.0)


def brownian_paths(n_paths: int, n_intervals: int, rng: np.random.Generator) -> np.ndarray:
    """``(n_paths, M + 1)`` array of standard Brownian paths starting at 0."""
    steps = rng.standard_normal((n_paths, n_intervals)) * math.sqrt(1.0 / n_intervals)
    out = np.zeros((n_paths, n_intervals + 1))
    np.cumsum(steps, axis=1, out=out[:, 1:])
    return out


def sample_brownian(n_intervals: int, rng: np.random.Generator, label: float = 0.0) -> BrownianPath:
    return BrownianPath(brownian_paths(1, n_intervals, rng)[0], label)


def sample_complex_brownian(n_intervals: int, rng: np.random.Generator,
                            labels: tuple[float, float] = (0.0, 0.0)) -> ComplexBrownianPath:
    x = sample_brownian(n_intervals, rng, labels[0])
    y = sample_brownian(n_intervals, rng, labels[1])
    return ComplexBrownianPath(x, y)


def stochastic_integral(psi: SampledFunction, z) -> complex | np.ndarray:
    """Left-point sum of ``psi dz``; ``z`` is a path object or an array of paths."""
    zv = z.values if isinstance(z, ComplexBrownianPath) else np.asarray(z)
    if zv.shape[-1] != psi.values.size:
        raise GridMismatchError("function and path use different grids")
    out = np.diff(zv, axis=-1) @ psi.values[:-1]
    return complex(out) if np.ndim(out) == 0 else out


# --------------------------------------------------------------------------
# Monte-Carlo checks
# --------------------------------------------------------------------------

@dataclass
class UnitarityReport:
    riemann_sum: float
    mc_mean: float
    std_error: float
    z_score: float
    n_paths: int
    convention: str = "ito-left-point"

    @property
    def passed(self) -> bool:
        return abs(self.z_score) <= 3.0


def _moments_over_blocks(n_paths: int, seed: int, tag: str, block_size: int, workers: int,
                         per_block: Callable[[np.random.Generator, int], np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Sums of ``x`` and ``x^2`` of per-path statistics, reduced in block order."""
    def one(blk):
        b, start, stop = blk
        vals = per_block(substream(seed, tag, b), stop - start)
        return vals.sum(axis=0), (vals * vals).sum(axis=0)

    parts = pmap(one, blocks(n_paths, block_size), workers)
    return ordered_sum([p[0] for p in parts]), ordered_sum([p[1] for p in parts])


def unitarity_check(psi: SampledFunction, n_paths: int = 10_000, seed: int = DEFAULT_SEED,
                    workers: int = 1, block_size: int = DEFAULT_BLOCK) -> UnitarityReport:
    """Mean of ``|I[psi]|^2`` over independent ``(x, y)`` path pairs vs. the Riemann sum."""
    if n_paths < 1000:
        raise ValueError("n_paths must be >= 1000")
    m = psi.n_intervals

    def stat(rng, count):
        x = brownian_paths(count, m, rng)
        y = brownian_paths(count, m, rng)
        return np.abs(stochastic_integral(psi, (x + 1j * y) / math.sqrt(2.0))) ** 2

    s1, s2 = _moments_over_blocks(n_paths, seed, "wiener:unitarity", block_size, workers, stat)
    mean = float(s1) / n_paths
    var = max(float(s2) / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    se = math.sqrt(var / n_paths)
    target = psi.norm_squared()
    z = (mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)
    return UnitarityReport(target, mean, se, z, n_paths)


@dataclass
class CovarianceReport:
    pairs: list
    estimate: np.ndarray
    std_error: np.ndarray
    expected: np.ndarray
    z_scores: np.ndarray
    n_paths: int

    @property
    def passed(self) -> bool:
        return bool(np.all(np.abs(self.z_scores) <= 3.0))


def covariance_check(pairs: Sequence[tuple[float, float]], n_paths: int = 100_000,
                     n_intervals: int = DEFAULT_INTERVALS, seed: int = DEFAULT_SEED,
                     workers: int = 1, block_size: int = DEFAULT_BLOCK) -> CovarianceReport:
    """Empirical ``E x(s) x(s')`` at grid pairs against ``min(s, s')``."""
    pairs = [(float(a), float(b)) for a, b in pairs]
    ia = np.array([int(round(a * n_intervals)) for a, _ in pairs])
    ib = np.array([int(round(b * n_intervals)) for _, b in pairs])
    if np.any((ia < 0) | (ia > n_intervals) | (ib < 0) | (ib > n_intervals)):
        raise ValueError("pairs must lie in [0, 1]")

    def stat(rng, count):
        x = brownian_paths(count, n_intervals, rng)
        return x[:, ia] * x[:, ib]

    s1, s2 = _moments_over_blocks(n_paths, seed, "wiener:covariance", block_size, workers, stat)
    mean = s1 / n_paths
    var = np.clip(s2 / n_paths - mean * mean, 0.0, None) * n_paths / (n_paths - 1)
    se = np.sqrt(var / n_paths)
    expected = np.minimum(ia, ib) / n_intervals
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (mean - expected) / se, 0.0)
    return CovarianceReport(pairs, mean, se, expected, z, n_paths)


def random_inner_product(ensemble1, ensemble2) -> tuple[complex, float]:
    """Sample mean of ``conj(psi1) psi2`` and its standard error."""
    a = np.asarray(ensemble1, dtype=complex).ravel()
    b = np.asarray(ensemble2, dtype=complex).ravel()
    if a.size != b.size:
        raise ValueError(f"ensembles differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("need at least two samples")
    prod = np.conj(a) * b
    mean = complex(prod.mean())
    se = float(np.sqrt(np.var(prod.real, ddof=1) + np.var(prod.imag, ddof=1)) / math.sqrt(a.size))
    return mean, se


def unit_functions(n_intervals: int = DEFAULT_INTERVALS) -> dict[str, SampledFunction]:
    """Unit-norm functions used by the unitarity checks."""
    return {
        "constant": SampledFunction.from_callable(lambda s: np.ones_like(s), n_intervals),
        "sine": SampledFunction.from_callable(lambda s: math.sqrt(2.0) * np.sin(np.pi * s), n_intervals),
        "chirp": SampledFunction.from_callable(
            lambda s: math.sqrt(3.0) * s * np.exp(1j * np.pi * s * s), n_intervals),
    }

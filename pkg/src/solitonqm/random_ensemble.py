"""Stochastic wave functions assembled from random soliton ensembles.

Each trial places ``n`` compactly supported solitons at random centers with
independent uniform phases.  The ensemble amplitude

    Psi_N(x_1..x_n) = (hbar^n N)^(-1/2) sum_j prod_k phi_j^(k)(x_k)

is compared against trial occupancy counts (Born rule), the inter-trial cross
term is tested against its Chebyshev bound, and mean values of symmetry
generators are compared between the per-trial and the amplitude forms.

Cell integrals of ``|Psi_N|^2`` are evaluated through per-particle Gram
matrices ``G_k(i, j) = int_cell phi_i^(k)* phi_j^(k)``:

    int_{C_1 x .. x C_n} |Psi_N|^2 = (hbar^n N)^(-1) sum_ij prod_k G_k(i, j)

which is exact for product quadrature weights, so configuration-space grids
are never materialized for ``n >= 2``.  The symmetrized overlap is
``a_ij = Re prod_k G_k(i, j)``; with all supports inside the cell
``a_ii = hbar^n``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import sparse, stats
from scipy.integrate import trapezoid
from scipy.special import gammaln

from ._rng import DEFAULT_BLOCK, DEFAULT_SEED, blocks, pmap, substream
from .exceptions import CostGuardError, RejectionOverflowError

TWO_PI = 2.0 * math.pi

#: constant ``C`` in the mean-value budget ``C * (v0 / dV) * scale``
OBSERVABLE_BUDGET_C = 10.0
#: largest ensemble for which dense ``a_ij`` tables are produced
MAX_CROSS_TRIALS = 2000
#: largest configuration-space grid :func:`assemble_wavefunction` will allocate
MAX_GRID_POINTS = 20_000_000


# --------------------------------------------------------------------------
# profile and instances
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpProfile:
    """Polynomial bump ``u(x) = (1 - |x|^2/R^2)^p`` on ``|x| < R``.

    The one-particle field is ``phi = nu_k u / sqrt(2) * exp(i (theta + k.x))``
    with ``nu_k`` fixed by ``int |phi|^2 = hbar``.
    """

    dimension: int = 1
    support_radius: float = 0.5
    power: int = 6
    hbar: float = 1.0

    def __post_init__(self):
        if self.dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2 or 3")
        if not self.support_radius > 0:
            raise ValueError("support_radius must be > 0")
        if self.power < 2:
            raise ValueError("power must be >= 2 (the field needs a continuous derivative)")
        if not self.hbar > 0:
            raise ValueError("hbar must be > 0")

    def bump_moment(self, m: float) -> float:
        """``int (1 - |x|^2/R^2)^m d^d x``."""
        d = self.dimension
        return float(
            self.support_radius ** d * math.pi ** (d / 2)
            * math.exp(gammaln(m + 1) - gammaln(m + 1 + d / 2))
        )

    @property
    def nu_k(self) -> float:
        return math.sqrt(2.0 * self.hbar / self.bump_moment(2 * self.power))

    @property
    def proper_volume(self) -> float:
        """Volume of the support's bounding cube, ``(2R)^d``."""
        return (2.0 * self.support_radius) ** self.dimension

    def _disp(self, disp) -> np.ndarray:
        disp = np.asarray(disp, dtype=float)
        if self.dimension == 1 and (disp.ndim == 0 or disp.shape[-1] != 1):
            disp = disp[..., None]
        if disp.shape[-1] != self.dimension:
            raise ValueError(f"displacements must have trailing size {self.dimension}")
        return disp

    def shape(self, disp) -> np.ndarray:
        """Real bump at displacement(s) ``disp`` (trailing axis = components)."""
        x = self._disp(disp)
        t = 1.0 - np.sum(x * x, axis=-1) / self.support_radius ** 2
        return np.where(t > 0, np.clip(t, 0.0, None) ** self.power, 0.0)

    def shape_gradient(self, disp) -> np.ndarray:
        x = self._disp(disp)
        r2 = self.support_radius ** 2
        t = 1.0 - np.sum(x * x, axis=-1) / r2
        tp = np.where(t > 0, np.clip(t, 0.0, None) ** (self.power - 1), 0.0)
        return (-2.0 * self.power / r2) * tp[..., None] * x

    def field(self, disp, phase=0.0, wavevector=None) -> np.ndarray:
        x = self._disp(disp)
        arg = np.asarray(phase, dtype=float)
        if wavevector is not None:
            arg = arg + x @ np.asarray(wavevector, dtype=float).reshape(self.dimension)
        return (self.nu_k / math.sqrt(2.0)) * self.shape(x) * np.exp(1j * arg)

    def field_gradient(self, disp, phase=0.0, wavevector=None) -> np.ndarray:
        """``grad phi`` with trailing component axis."""
        x = self._disp(disp)
        k = np.zeros(self.dimension) if wavevector is None else np.asarray(wavevector, float).reshape(-1)
        arg = np.asarray(phase, dtype=float) + x @ k
        du = self.shape_gradient(x) + 1j * k * self.shape(x)[..., None]
        return (self.nu_k / math.sqrt(2.0)) * du * np.exp(1j * arg)[..., None]


@dataclass(frozen=True)
class SolitonInstance:
    particle_index: int
    center: tuple
    phase: float = 0.0
    wavevector: Optional[tuple] = None

    def __post_init__(self):
        if self.particle_index < 1:
            raise ValueError("particle_index starts at 1")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))


@dataclass(frozen=True)
class TrialConfiguration:
    trial_index: int
    instances: tuple

    def __post_init__(self):
        object.__setattr__(self, "instances", tuple(self.instances))
        idx = sorted(s.particle_index for s in self.instances)
        if idx != list(range(1, len(idx) + 1)):
            raise ValueError("a trial needs exactly one instance per particle index 1..n")

    @property
    def n_particles(self) -> int:
        return len(self.instances)


def build_single_particle_field(profile: BumpProfile, instance: SolitonInstance, point) -> np.ndarray:
    """Field of one soliton at ``point`` (zero outside its support)."""
    disp = np.asarray(point, dtype=float) - np.asarray(instance.center)
    return profile.field(disp, instance.phase, instance.wavevector)


# --------------------------------------------------------------------------
# ensemble configuration and sampling
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble settings.

    ``domain`` is a box (one ``(lo, hi)`` pair per spatial axis).  Centers are
    drawn from ``density`` (uniform when ``None``) restricted to the box shrunk
    by the support radius, so every support lies inside the domain.
    ``density`` is an unnormalized pdf evaluated on arrays of shape ``(m, d)``
    and bounded by ``density_max``.
    """

    n_particles: int = 1
    n_trials: int = 10_000
    domain: tuple = ((0.0, 2000.0),)
    cell_volume: float = 100.0
    proper_volume: float = 1.0
    packing_alpha: float = 1.0
    seed: int = DEFAULT_SEED
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    density_max: float = 1.0
    carrier: Optional[tuple] = None
    disjoint: bool = True
    max_rejections: int = 10_000
    block_size: int = DEFAULT_BLOCK

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple((float(a), float(b)) for a, b in self.domain))
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if any(not b > a for a, b in self.domain):
            raise ValueError("domain intervals must have hi > lo")
        if not self.proper_volume > 0 or not self.cell_volume > 0:
            raise ValueError("volumes must be > 0")

    @property
    def dimension(self) -> int:
        return len(self.domain)

    @property
    def volume_ratio(self) -> float:
        """``alpha v0 / dV`` for one particle."""
        return self.packing_alpha * self.proper_volume / self.cell_volume


@dataclass(frozen=True, eq=False)
class TrialBatch:
    """Array form of many trials: ``centers`` is ``(N, n, d)``, ``phases`` ``(N, n)``."""

    centers: np.ndarray
    phases: np.ndarray
    wavevectors: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def n_particles(self) -> int:
        return self.centers.shape[1]

    @property
    def dimension(self) -> int:
        return self.centers.shape[2]

    def trial(self, j: int) -> TrialConfiguration:
        inst = []
        for k in range(self.n_particles):
            kv = None if self.wavevectors is None else tuple(self.wavevectors[k])
            inst.append(SolitonInstance(k + 1, tuple(self.centers[j, k]), float(self.phases[j, k]), kv))
        return TrialConfiguration(j, tuple(inst))

    def trials(self) -> list[TrialConfiguration]:
        return [self.trial(j) for j in range(len(self))]

    @classmethod
    def from_trials(cls, trials: Sequence[TrialConfiguration]) -> "TrialBatch":
        trials = list(trials)
        if not trials:
            return cls(np.zeros((0, 1, 1)), np.zeros((0, 1)))
        n = trials[0].n_particles
        if any(t.n_particles != n for t in trials):
            raise ValueError("all trials must share the number of particles")
        ordered = [sorted(t.instances, key=lambda s: s.particle_index) for t in trials]
        centers = np.array([[s.center for s in inst] for inst in ordered], dtype=float)
        phases = np.array([[s.phase for s in inst] for inst in ordered], dtype=float)
        kv = [s.wavevector for s in ordered[0]]
        wavevectors = None if all(v is None for v in kv) else np.array(
            [v if v is not None else (0.0,) * centers.shape[2] for v in kv], dtype=float)
        return cls(centers, phases, wavevectors)


def as_batch(trials) -> TrialBatch:
    if isinstance(trials, TrialBatch):
        return trials
    return TrialBatch.from_trials(trials)


def center_region(config: EnsembleConfig, profile: BumpProfile) -> np.ndarray:
    """``(d, 2)`` box of admissible centers."""
    r = profile.support_radius
    return np.array([(a + r, b - r) for a, b in config.domain])


def _check_feasible(config: EnsembleConfig, profile: BumpProfile) -> np.ndarray:
    if config.dimension != profile.dimension:
        raise ValueError("domain dimension differs from the profile dimension")
    region = center_region(config, profile)
    if np.any(region[:, 1] < region[:, 0]):
        raise RejectionOverflowError("domain is smaller than one soliton support")
    if config.disjoint and config.n_particles > 1 and config.dimension == 1:
        need = (config.n_particles - 1) * 2.0 * profile.support_radius
        if region[0, 1] - region[0, 0] < need:
            raise RejectionOverflowError(
                f"cannot fit {config.n_particles} disjoint supports of radius "
                f"{profile.support_radius} in {config.domain[0]}"
            )
    return region


def _draw_points(config: EnsembleConfig, region: np.ndarray, rng: np.random.Generator, m: int) -> np.ndarray:
    lo, hi = region[:, 0], region[:, 1]
    if config.density is None:
        return lo + (hi - lo) * rng.random((m, region.shape[0]))
    out = np.empty((m, region.shape[0]))
    filled = 0
    attempts = 0
    while filled < m:
        attempts += 1
        if attempts > config.max_rejections:
            raise RejectionOverflowError("density rejection sampling did not terminate")
        want = m - filled
        cand = lo + (hi - lo) * rng.random((2 * want + 8, region.shape[0]))
        keep = rng.random(cand.shape[0]) * config.density_max < np.asarray(config.density(cand))
        acc = cand[keep][:want]
        out[filled: filled + acc.shape[0]] = acc
        filled += acc.shape[0]
    return out


def _overlapping(centers: np.ndarray, radius: float) -> np.ndarray:
    """Per trial: whether any two particles' supports intersect."""
    n = centers.shape[1]
    bad = np.zeros(centers.shape[0], dtype=bool)
    for a in range(n):
        for b in range(a + 1, n):
            dist = np.linalg.norm(centers[:, a] - centers[:, b], axis=-1)
            bad |= dist < 2.0 * radius
    return bad


def _sample_block(config: EnsembleConfig, profile: BumpProfile, region, rng, count: int):
    n, d = config.n_particles, config.dimension
    centers = _draw_points(config, region, rng, count * n).reshape(count, n, d)
    if config.disjoint and n > 1:
        bad = _overlapping(centers, profile.support_radius)
        rounds = 0
        while bad.any():
            rounds += 1
            if rounds > config.max_rejections:
                raise RejectionOverflowError(
                    "rejection sampling exceeded max_rejections while separating supports")
            nb = int(bad.sum())
            centers[bad] = _draw_points(config, region, rng, nb * n).reshape(nb, n, d)
            bad = _overlapping(centers, profile.support_radius)
    phases = TWO_PI * rng.random((count, n))
    return centers, phases


def _wavevectors(config: EnsembleConfig) -> Optional[np.ndarray]:
    if config.carrier is None:
        return None
    k = np.asarray(config.carrier, dtype=float)
    if k.ndim == 1 and k.size == config.dimension:
        k = np.tile(k, (config.n_particles, 1))
    elif k.ndim == 0:
        k = np.full((config.n_particles, config.dimension), float(k))
    return k.reshape(config.n_particles, config.dimension)


def sample_trial(config: EnsembleConfig, profile: BumpProfile, rng: np.random.Generator,
                 trial_index: int = 0) -> TrialConfiguration:
    """One trial: centers from the sampling density, uniform phases."""
    region = _check_feasible(config, profile)
    centers, phases = _sample_block(config, profile, region, rng, 1)
    inst = TrialBatch(centers, phases, _wavevectors(config)).trial(0).instances
    return TrialConfiguration(trial_index, inst)


def sample_ensemble(config: EnsembleConfig, profile: BumpProfile, workers: int = 1,
                    repetition: int = 0) -> TrialBatch:
    """``config.n_trials`` trials from block substreams keyed by ``(seed, repetition, block)``."""
    region = _check_feasible(config, profile)
    tag = f"ensemble:{repetition}"

    def one(blk):
        b, start, stop = blk
        return _sample_block(config, profile, region, substream(config.seed, tag, b), stop - start)

    parts = pmap(one, blocks(config.n_trials, config.block_size), workers)
    centers = np.concatenate([p[0] for p in parts], axis=0)
    phases = np.concatenate([p[1] for p in parts], axis=0)
    return TrialBatch(centers, phases, _wavevectors(config))


# --------------------------------------------------------------------------
# grids and the gridded amplitude
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LineGrid:
    """Uniform grid on ``[lo, hi]`` with trapezoid weights."""

    lo: float
    hi: float
    n_intervals: int

    def __post_init__(self):
        if not self.hi > self.lo or self.n_intervals < 1:
            raise ValueError("need hi > lo and n_intervals >= 1")

    @classmethod
    def with_spacing(cls, lo: float, hi: float, spacing: float) -> "LineGrid":
        return cls(lo, hi, max(1, int(round((hi - lo) / spacing))))

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_intervals

    @property
    def points(self) -> np.ndarray:
        return self.lo + self.h * np.arange(self.n_intervals + 1)

    @property
    def size(self) -> int:
        return self.n_intervals + 1

    def weights(self, lo: Optional[float] = None, hi: Optional[float] = None) -> np.ndarray:
        """Quadrature weights of the sub-interval ``[lo, hi]``.

        Point ``i`` gets the length of ``[x_i - h/2, x_i + h/2]`` clipped to the
        sub-interval and the grid, which reproduces the trapezoid rule for
        sub-intervals whose ends are grid points or the grid ends.
        """
        lo = self.lo if lo is None else max(lo, self.lo)
        hi = self.hi if hi is None else min(hi, self.hi)
        x = self.points
        left = np.maximum(x - 0.5 * self.h, lo)
        right = np.minimum(x + 0.5 * self.h, hi)
        return np.clip(right - left, 0.0, None)


def default_grid(config: EnsembleConfig, profile: BumpProfile, per_radius: int = 16) -> LineGrid:
    if config.dimension != 1:
        raise ValueError("default_grid is for one-dimensional domains")
    a, b = config.domain[0]
    return LineGrid.with_spacing(a, b, profile.support_radius / per_radius)


@dataclass(frozen=True, eq=False)
class StochasticWavefunction:
    """``Psi_N`` on a product grid, one :class:`LineGrid` per configuration axis."""

    axes: tuple
    values: np.ndarray
    n_trials: int


def _window(grid: LineGrid, c: float, radius: float) -> tuple[int, int]:
    i0 = max(0, int(math.floor((c - radius - grid.lo) / grid.h)))
    i1 = min(grid.size, int(math.ceil((c + radius - grid.lo) / grid.h)) + 1)
    return i0, i1


def assemble_wavefunction(trials, profile: BumpProfile, grid,
                          max_points: int = MAX_GRID_POINTS) -> StochasticWavefunction:
    """Sum of per-trial product fields on the configuration-space grid.

    ``grid`` is one :class:`LineGrid` per configuration axis (``n * d`` of
    them); a single grid is reused for every axis.
    """
    batch = as_batch(trials)
    n, d = batch.n_particles, batch.dimension
    n_axes = n * d
    if n_axes > 3:
        raise CostGuardError(f"configuration space of dimension {n_axes} > 3 is not gridded")
    axes = (grid,) * n_axes if isinstance(grid, LineGrid) else tuple(grid)
    if len(axes) != n_axes:
        raise ValueError(f"need {n_axes} grid axes, got {len(axes)}")
    shape = tuple(ax.size for ax in axes)
    if math.prod(shape) > max_points:
        raise CostGuardError(f"grid of {math.prod(shape)} points exceeds max_points={max_points}")
    psi = np.zeros(shape, dtype=complex)
    r = profile.support_radius
    kv = batch.wavevectors
    for j in range(len(batch)):
        slices = []
        term = np.ones((), dtype=complex)
        for k in range(n):
            c = batch.centers[j, k]
            wins = [_window(axes[k * d + a], c[a], r) for a in range(d)]
            if any(i1 <= i0 for i0, i1 in wins):
                break
            pts = np.meshgrid(*[axes[k * d + a].points[i0:i1] for a, (i0, i1) in enumerate(wins)],
                              indexing="ij")
            disp = np.stack([p - c[a] for a, p in enumerate(pts)], axis=-1)
            phi = profile.field(disp, batch.phases[j, k], None if kv is None else kv[k])
            term = np.multiply.outer(term, phi)
            slices.extend(slice(i0, i1) for i0, i1 in wins)
        else:
            psi[tuple(slices)] += term
    norm = (profile.hbar ** n * len(batch)) ** -0.5 if len(batch) else 0.0
    return StochasticWavefunction(axes, norm * psi, len(batch))


def cell_density(psi: StochasticWavefunction, cell) -> float:
    """``rho_N``: cell integral of ``|Psi_N|^2`` divided by the cell volume."""
    cell = _as_cell(cell, len(psi.axes))
    dens = np.abs(psi.values) ** 2
    vol = 1.0
    for ax, (lo, hi) in zip(psi.axes, cell):
        dens = np.tensordot(ax.weights(lo, hi), dens, axes=([0], [0]))
        vol *= hi - lo
    return float(dens) / vol


# --------------------------------------------------------------------------
# cells, counts, Gram matrices
# --------------------------------------------------------------------------

def _as_cell(cell, n_axes: int) -> tuple:
    cell = tuple((float(a), float(b)) for a, b in cell)
    if len(cell) != n_axes:
        raise ValueError(f"cell needs {n_axes} (lo, hi) pairs")
    if any(not b > a for a, b in cell):
        raise ValueError("cell intervals must have hi > lo")
    return cell


def uniform_cells(config: EnsembleConfig, width: Optional[float] = None) -> list[tuple]:
    """Product partition of ``domain^n`` into cubes of side ``width``.

    ``width`` defaults to ``cell_volume ** (1/d)``; the domain length must be a
    multiple of it.
    """
    d = config.dimension
    width = config.cell_volume ** (1.0 / d) if width is None else float(width)
    edges = []
    for a, b in config.domain:
        m = int(round((b - a) / width))
        if m < 1 or abs(m * width - (b - a)) > 1e-9 * (b - a):
            raise ValueError(f"domain [{a}, {b}] is not a multiple of the cell width {width}")
        e = a + width * np.arange(m + 1)
        e[-1] = b
        edges.append(list(zip(e[:-1], e[1:])))
    per_particle = [tuple()]
    for ax in edges:
        per_particle = [c + (iv,) for c in per_particle for iv in ax]
    cells = [tuple()]
    for _ in range(config.n_particles):
        cells = [c + pc for c in cells for pc in per_particle]
    return cells


def empirical_counts(trials, cell) -> int:
    """Trials whose full center tuple lies in ``cell`` (half-open intervals)."""
    batch = as_batch(trials)
    if len(batch) == 0:
        return 0
    n, d = batch.n_particles, batch.dimension
    cell = _as_cell(cell, n * d)
    flat = batch.centers.reshape(len(batch), n * d)
    lo = np.array([c[0] for c in cell])
    hi = np.array([c[1] for c in cell])
    return int(np.all((flat >= lo) & (flat < hi), axis=1).sum())


def field_matrix(batch: TrialBatch, profile: BumpProfile, grid: LineGrid, particle: int,
                 derivative: bool = False) -> sparse.csr_matrix:
    """Sparse ``(N, M)`` samples of ``phi_j^(k)`` (or ``d phi / dx``) on ``grid``."""
    if batch.dimension != 1:
        raise ValueError("field_matrix works on one-dimensional trials")
    n_t = len(batch)
    c = batch.centers[:, particle, 0]
    r = profile.support_radius
    width = int(math.ceil(2 * r / grid.h)) + 3
    i0 = np.floor((c - r - grid.lo) / grid.h).astype(np.int64)
    idx = i0[:, None] + np.arange(width)[None, :]
    valid = (idx >= 0) & (idx < grid.size)
    idx_c = np.clip(idx, 0, grid.size - 1)
    disp = grid.points[idx_c] - c[:, None]
    kv = None if batch.wavevectors is None else batch.wavevectors[particle]
    ph = batch.phases[:, particle][:, None]
    if derivative:
        vals = profile.field_gradient(disp[..., None], ph, kv)[..., 0]
    else:
        vals = profile.field(disp[..., None], ph, kv)
    vals = np.where(valid, vals, 0.0)
    rows = np.repeat(np.arange(n_t), width)
    mat = sparse.csr_matrix((vals.ravel(), (rows, idx_c.ravel())), shape=(n_t, grid.size))
    mat.eliminate_zeros()
    return mat


def gram_matrix(phi: sparse.csr_matrix, weights: np.ndarray, right: Optional[sparse.csr_matrix] = None):
    """``G(i, j) = sum_x w(x) conj(phi_i(x)) right_j(x)`` as a sparse matrix."""
    right = phi if right is None else right
    return (phi.conj().multiply(weights[None, :]).tocsr() @ right.T).tocsr()


def _cell_grams(batch, profile, grid, cell) -> list:
    mats = [field_matrix(batch, profile, grid, k) for k in range(batch.n_particles)]
    return [gram_matrix(m, grid.weights(lo, hi)) for m, (lo, hi) in zip(mats, cell)]


def _product(grams: list):
    out = grams[0]
    for g in grams[1:]:
        out = out.multiply(g).tocsr()
    return out


def cell_mass(trials, profile: BumpProfile, cell, grid: Optional[LineGrid] = None) -> float:
    """``(dV)^n rho_N`` for one cell, via per-particle Gram matrices."""
    batch = as_batch(trials)
    cell = _as_cell(cell, batch.n_particles)
    grid = grid or _grid_for(batch, profile)
    if batch.n_particles == 1:
        psi = np.asarray(field_matrix(batch, profile, grid, 0).sum(axis=0)).ravel()
        total = float(np.dot(grid.weights(*cell[0]), np.abs(psi) ** 2))
    else:
        total = float(np.real(_product(_cell_grams(batch, profile, grid, cell)).sum()))
    return total / (profile.hbar ** batch.n_particles * len(batch))


def _grid_for(batch: TrialBatch, profile: BumpProfile, per_radius: int = 16) -> LineGrid:
    r = profile.support_radius
    lo = float(batch.centers.min()) - 2 * r
    hi = float(batch.centers.max()) + 2 * r
    h = r / per_radius
    lo = h * math.floor(lo / h)
    hi = h * math.ceil(hi / h)
    return LineGrid.with_spacing(lo, hi, h)


def cross_term_statistic(trials, profile: BumpProfile, cell, grid: Optional[LineGrid] = None,
                         max_trials: int = MAX_CROSS_TRIALS) -> tuple[float, np.ndarray]:
    """``S = sum_{i != j} a_ij`` and the dense ``a`` table (zero diagonal).

    ``a_ij = Re prod_k int_cell conj(phi_i^(k)) phi_j^(k)``, symmetric.
    """
    batch = as_batch(trials)
    if len(batch) > max_trials:
        raise CostGuardError(f"{len(batch)} trials exceed the cross-term limit {max_trials}")
    cell = _as_cell(cell, batch.n_particles)
    grid = grid or _grid_for(batch, profile)
    a = np.real(_product(_cell_grams(batch, profile, grid, cell)).toarray())
    a = 0.5 * (a + a.T)
    np.fill_diagonal(a, 0.0)
    return float(a.sum()), a


def _cross_sum(batch, profile, grid, cell) -> tuple[float, float]:
    """Diagonal sum and off-diagonal sum of ``a`` without densifying."""
    prod = _product(_cell_grams(batch, profile, grid, cell))
    diag = float(np.real(prod.diagonal()).sum())
    return diag, float(np.real(prod.sum())) - diag


# --------------------------------------------------------------------------
# Born rule and Chebyshev bound
# --------------------------------------------------------------------------

@dataclass
class BornReport:
    cells: list
    rho_cell: np.ndarray
    freq: np.ndarray
    bound: np.ndarray
    n_trials: int
    cross_scale: float
    passed: bool = field(init=False)
    max_deviation: float = field(init=False)
    max_ratio: float = field(init=False)

    def __post_init__(self):
        dev = np.abs(self.rho_cell - self.freq)
        self.max_deviation = float(dev.max()) if dev.size else 0.0
        self.max_ratio = float(np.max(dev / self.bound)) if dev.size else 0.0
        self.passed = bool(np.all(dev <= self.bound))

    def rows(self):
        return [(i, float(r), float(f), float(b))
                for i, (r, f, b) in enumerate(zip(self.rho_cell, self.freq, self.bound))]


def born_rule_check(config: EnsembleConfig, trials, profile: BumpProfile, cells=None,
                    grid: Optional[LineGrid] = None) -> BornReport:
    """Per-cell ``(dV)^n rho_N`` against ``dN / N``.

    Budget per cell: ``3 sqrt(f (1 - f) / N) + prod_k (alpha v0 / dV_k)``.
    """
    batch = as_batch(trials)
    n = batch.n_particles
    if batch.dimension != 1:
        raise ValueError("born_rule_check works on one-dimensional trials")
    cells = uniform_cells(config) if cells is None else [_as_cell(c, n) for c in cells]
    grid = grid or default_grid(config, profile)
    n_t = len(batch)
    mats = [field_matrix(batch, profile, grid, k) for k in range(n)]
    hbar_n = profile.hbar ** n

    rho = np.empty(len(cells))
    if n == 1:
        psi = np.asarray(mats[0].sum(axis=0)).ravel()
        dens = np.abs(psi) ** 2
        for i, c in enumerate(cells):
            rho[i] = np.dot(grid.weights(*c[0]), dens) / (hbar_n * n_t)
    else:
        cache: dict = {}

        def gram(k, iv):
            key = (k, iv)
            if key not in cache:
                cache[key] = gram_matrix(mats[k], grid.weights(*iv))
            return cache[key]

        for i, c in enumerate(cells):
            rho[i] = np.real(_product([gram(k, iv) for k, iv in enumerate(c)]).sum()) / (hbar_n * n_t)

    freq = np.array([empirical_counts(batch, c) for c in cells], dtype=float) / n_t
    cross = np.array([_cross_scale(config, c) for c in cells])
    bound = 3.0 * np.sqrt(freq * (1 - freq) / n_t) + cross
    return BornReport(list(cells), rho, freq, bound, n_t, float(cross.max()))


def _cross_scale(config: EnsembleConfig, cell) -> float:
    """``prod_k (alpha v0 / dV_k)`` with ``dV_k`` the volume of particle k's cell."""
    d = config.dimension
    out = 1.0
    for k in range(len(cell) // d):
        vol = math.prod(hi - lo for lo, hi in cell[k * d:(k + 1) * d])
        out *= config.packing_alpha * config.proper_volume / vol
    return out


def central_cell(config: EnsembleConfig, width: Optional[float] = None) -> tuple:
    """One cube of side ``width`` per particle, centered in the domain."""
    width = config.cell_volume ** (1.0 / config.dimension) if width is None else width
    per = tuple((0.5 * (a + b) - 0.5 * width, 0.5 * (a + b) + 0.5 * width) for a, b in config.domain)
    return per * config.n_particles


@dataclass
class ChebyshevReport:
    exceed_frequency: float
    bound: float
    sigma_binomial: float
    repetitions: int
    mean_ratio: float
    passed: bool
    s_values: np.ndarray
    counts: np.ndarray


def chebyshev_bound_check(config: EnsembleConfig, profile: BumpProfile, repetitions: int = 200,
                          cell=None, workers: int = 1,
                          max_trials: int = MAX_CROSS_TRIALS) -> ChebyshevReport:
    """Exceedance frequency of ``|S| > hbar^n dN`` over independent ensembles.

    ``mean_ratio`` is the sample mean of ``S^2 / (hbar^n dN)^2``, the quantity
    Chebyshev's inequality bounds the exceedance probability by.
    """
    if repetitions < 100:
        raise ValueError("repetitions must be >= 100")
    if config.n_trials > max_trials:
        raise CostGuardError(f"{config.n_trials} trials exceed the cross-term limit {max_trials}")
    cell = central_cell(config) if cell is None else _as_cell(cell, config.n_particles)
    hbar_n = profile.hbar ** config.n_particles

    def one(rep):
        batch = sample_ensemble(config, profile, repetition=rep)
        grid = _grid_for(batch, profile)
        _, s = _cross_sum(batch, profile, grid, cell)
        return s, empirical_counts(batch, cell)

    res = pmap(one, range(repetitions), workers)
    s_vals = np.array([r[0] for r in res])
    counts = np.array([r[1] for r in res])
    exceed = np.abs(s_vals) > hbar_n * counts
    freq = float(exceed.mean())
    bound = _cross_scale(config, cell)
    sigma = math.sqrt(bound * (1 - bound) / repetitions)
    safe = np.where(counts > 0, counts, 1)
    ratio = float(np.mean((s_vals / (hbar_n * safe)) ** 2))
    return ChebyshevReport(freq, bound, sigma, repetitions, ratio,
                           bool(freq <= bound + 3 * sigma), s_vals, counts)


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------

GENERATORS = ("translation", "rotation")


class ObservableMeans(NamedTuple):
    ensemble_mean: float | np.ndarray
    quadrature_mean: float | np.ndarray


def observable_budget(config: EnsembleConfig, scale: float) -> float:
    """Allowed ``|ensemble_mean - quadrature_mean|``: ``C (v0 / dV) scale``."""
    return OBSERVABLE_BUDGET_C * config.proper_volume / config.cell_volume * abs(scale)


def observable_mean(trials, profile: BumpProfile, generator: str = "translation",
                    grid=None, per_particle: bool = False, axis: int = 0) -> ObservableMeans:
    """Mean of ``hbar M`` from per-trial integrals and from ``Psi_N``.

    ``translation`` is ``M = -i d/dx_axis``; ``rotation`` is
    ``M = -i (x d/dy - y d/dx)`` about the grid center (``d >= 2``, one
    particle).  With ``per_particle`` both entries are length-``n`` arrays
    whose sums are the totals.
    """
    if generator not in GENERATORS:
        raise ValueError(f"unsupported generator {generator!r}; choose from {GENERATORS}")
    batch = as_batch(trials)
    if batch.dimension == 1:
        if generator != "translation":
            raise ValueError("rotation needs dimension >= 2")
        res = _translation_1d(batch, profile, grid)
    else:
        res = _windowed_mean(batch, profile, generator, grid, axis)
    if per_particle:
        return ObservableMeans(np.asarray(res[0]), np.asarray(res[1]))
    return ObservableMeans(float(np.sum(res[0])), float(np.sum(res[1])))


def _translation_1d(batch: TrialBatch, profile: BumpProfile, grid) -> tuple[np.ndarray, np.ndarray]:
    grid = grid or _grid_for(batch, profile)
    n, n_t, hbar = batch.n_particles, len(batch), profile.hbar
    w = grid.weights()
    phis = [field_matrix(batch, profile, grid, k) for k in range(n)]
    # -i d/dx applied to every soliton
    mphis = [-1j * field_matrix(batch, profile, grid, k, derivative=True) for k in range(n)]
    ens = np.empty(n)
    quad_ = np.empty(n)
    grams = [gram_matrix(p, w) for p in phis]
    for k in range(n):
        diag = np.asarray(phis[k].conj().multiply(mphis[k]).multiply(w[None, :]).sum(axis=1)).ravel()
        ens[k] = float(np.real(diag.sum())) / n_t
        mk = gram_matrix(phis[k], w, mphis[k])
        others = [grams[q] for q in range(n) if q != k]
        tot = mk if not others else _product([mk] + others)
        quad_[k] = float(np.real(tot.sum())) * hbar / (hbar ** n * n_t)
    return ens, quad_


def _windowed_mean(batch, profile, generator, grid, axis):
    if batch.n_particles != 1:
        raise ValueError("dimension >= 2 observables support one particle")
    d = batch.dimension
    r = profile.support_radius
    if grid is None:
        lo = batch.centers[:, 0, :].min(axis=0) - 2 * r
        hi = batch.centers[:, 0, :].max(axis=0) + 2 * r
        grid = [LineGrid.with_spacing(a, b, r / 12) for a, b in zip(lo, hi)]
    axes = (grid,) * d if isinstance(grid, LineGrid) else tuple(grid)
    shape = tuple(ax.size for ax in axes)
    if math.prod(shape) > MAX_GRID_POINTS:
        raise CostGuardError("observable grid too large")
    center = np.array([0.5 * (ax.lo + ax.hi) for ax in axes])
    psi = np.zeros(shape, complex)
    mpsi = np.zeros(shape, complex)
    ens = 0.0
    kv = None if batch.wavevectors is None else batch.wavevectors[0]
    wts = [ax.weights() for ax in axes]
    for j in range(len(batch)):
        c = batch.centers[j, 0]
        wins = [_window(ax, c[a], r) for a, ax in enumerate(axes)]
        pts = np.meshgrid(*[ax.points[i0:i1] for ax, (i0, i1) in zip(axes, wins)], indexing="ij")
        pos = np.stack(pts, axis=-1)
        phi = profile.field(pos - c, batch.phases[j, 0], kv)
        grad = profile.field_gradient(pos - c, batch.phases[j, 0], kv)
        if generator == "translation":
            m = -1j * grad[..., axis]
        else:
            rel = pos - center
            m = -1j * (rel[..., 0] * grad[..., 1] - rel[..., 1] * grad[..., 0])
        sl = tuple(slice(i0, i1) for i0, i1 in wins)
        w = wts[0][sl[0]]
        for a in range(1, d):
            w = np.multiply.outer(w, wts[a][sl[a]])
        ens += float(np.real(np.sum(w * np.conj(phi) * m)))
        psi[sl] += phi
        mpsi[sl] += m
    w = wts[0]
    for a in range(1, d):
        w = np.multiply.outer(w, wts[a])
    n_t = len(batch)
    quad_ = float(np.real(np.sum(w * np.conj(psi) * mpsi))) / n_t
    return np.array([ens / n_t]), np.array([quad_])


# --------------------------------------------------------------------------
# Gaussian limit
# --------------------------------------------------------------------------

@dataclass
class GaussianLimitReport:
    points: np.ndarray
    variance: np.ndarray
    variance_stderr: np.ndarray
    predicted: np.ndarray
    z_scores: np.ndarray
    skewness: float
    kurtosis: float
    kurtosis_band: float
    skewness_band: float
    repetitions: int
    passed: bool


def predicted_variance(config: EnsembleConfig, profile: BumpProfile, points, n_grid: int = 20001) -> np.ndarray:
    """``E|Psi_N(x)|^2 = (1/hbar) int rho(c) |phi(x - c)|^2 dc`` for one particle in 1D."""
    region = center_region(config, profile)[0]
    c = np.linspace(region[0], region[1], n_grid)
    rho = np.ones_like(c) if config.density is None else np.asarray(config.density(c[:, None]), float)
    rho = rho / trapezoid(rho, c)
    pts = np.atleast_1d(np.asarray(points, float))
    out = np.empty(pts.size)
    for i, x in enumerate(pts):
        out[i] = trapezoid(rho * np.abs(profile.field(x - c)) ** 2, c) / profile.hbar
    return out


def gaussian_limit_check(config: EnsembleConfig, profile: BumpProfile, points,
                         repetitions: int = 200, workers: int = 1) -> GaussianLimitReport:
    """Distribution of ``Psi_N`` at fixed points over independent ensembles.

    Variance is tested point-wise (z-score within 3), skewness and kurtosis of
    the standardized ``Re Psi_N`` pooled over points with nonzero variance.
    """
    if config.n_particles != 1 or config.dimension != 1:
        raise ValueError("gaussian_limit_check covers one particle in one dimension")
    if repetitions < 100:
        raise ValueError("repetitions must be >= 100")
    pts = np.atleast_1d(np.asarray(points, float))

    def one(rep):
        batch = sample_ensemble(config, profile, repetition=rep)
        disp = pts[None, :] - batch.centers[:, 0, 0][:, None]
        kv = None if batch.wavevectors is None else batch.wavevectors[0]
        vals = profile.field(disp[..., None], batch.phases[:, 0][:, None], kv)
        return vals.sum(axis=0) / math.sqrt(profile.hbar * len(batch))

    samples = np.array(pmap(one, range(repetitions), workers))  # (R, P)
    p2 = np.abs(samples) ** 2
    var = p2.mean(axis=0)
    se = p2.std(axis=0, ddof=1) / math.sqrt(repetitions)
    pred = predicted_variance(config, profile, pts)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (var - pred) / se, np.where(np.abs(var - pred) < 1e-300, 0.0, np.inf))
    live = var > 0
    re = samples.real[:, live]
    if re.size:
        std = re.std(axis=0, ddof=1)
        pooled = ((re - re.mean(axis=0)) / std).ravel()
        skew = float(stats.skew(pooled))
        kurt = float(stats.kurtosis(pooled, fisher=False))
        m = pooled.size
    else:
        skew, kurt, m = 0.0, 3.0, 1
    k_band = 3.0 * math.sqrt(24.0 / m)
    s_band = 3.0 * math.sqrt(6.0 / m)
    ok = bool(np.all(np.abs(z) <= 3.0) and abs(kurt - 3.0) <= k_band and abs(skew) <= s_band)
    return GaussianLimitReport(pts, var, se, pred, z, skew, kurt, k_band, s_band, repetitions, ok)


# --------------------------------------------------------------------------
# lattice sum
# --------------------------------------------------------------------------

class LatticeDemoResult(NamedTuple):
    fit_error: float
    fitted_amplitude: complex
    oracle_amplitude: float
    dft_peak_k: float
    dft_resolution: float


def lattice_plane_wave_demo(profile: BumpProfile, spacing: float, k: float, n_nodes: int = 1001,
                            window_periods: int = 10, samples_per_period: int = 256) -> LatticeDemoResult:
    """Sum of copies ``e^{ikx} phi(x + m a)`` over ``n_nodes`` nodes, fitted by ``A e^{ikx}``.

    The fit runs over ``window_periods`` periods around the lattice center.
    ``oracle_amplitude`` is the zero-frequency DFT coefficient of a single
    period of the carrier-free comb; the least-squares ``A`` equals it when the
    window holds whole periods.  ``fit_error`` is the relative L2 residual.
    """
    if profile.dimension != 1:
        raise ValueError("the lattice demonstration is one-dimensional")
    if n_nodes < 1 or window_periods < 1 or samples_per_period < 8:
        raise ValueError("window too small: need n_nodes >= 1, window_periods >= 1, samples_per_period >= 8")
    a = float(spacing)
    r = profile.support_radius
    half = 0.5 * window_periods * a
    x = -half + (2 * half) * np.arange(window_periods * samples_per_period) / (window_periods * samples_per_period)
    m_lo = -(n_nodes // 2)
    nodes = a * np.arange(m_lo, m_lo + n_nodes)
    near = nodes[(nodes > -half - r - a) & (nodes < half + r + a)]
    comb = np.zeros_like(x)
    for d in near:
        comb += np.real(profile.field(x - d))
    s = np.exp(1j * k * x) * comb
    carrier = np.exp(1j * k * x)
    amp = complex(np.vdot(carrier, s) / x.size)
    resid = np.linalg.norm(s - amp * carrier)
    norm = np.linalg.norm(s)
    fit_error = float(resid / norm) if norm > 0 else float("inf")
    # one period of the comb, sampled on the same points
    xp = -0.5 * a + a * np.arange(samples_per_period) / samples_per_period
    period = np.zeros_like(xp)
    for mm in range(-int(math.ceil(r / a)) - 1, int(math.ceil(r / a)) + 2):
        period += np.real(profile.field(xp - mm * a))
    oracle = float(np.fft.fft(period)[0].real / samples_per_period)
    # Hann taper and zero padding keep off-bin peaks from leaking past the carrier
    pad = 8 * x.size
    spec = np.abs(np.fft.fft(s * np.hanning(x.size), n=pad))
    dx = x[1] - x[0]
    freqs = TWO_PI * np.fft.fftfreq(pad, d=dx)
    peak = float(freqs[int(np.argmax(spec))])
    return LatticeDemoResult(fit_error, amp, oracle, peak, float(TWO_PI / (pad * dx)))

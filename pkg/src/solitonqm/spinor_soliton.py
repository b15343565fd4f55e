"""Stationary nonlinear spinor soliton: radial shooting, normalization, spin.

The stationary ansatz

    u = f(r) / sqrt(4 pi) [1, 0]^T,    v = i g(r) / sqrt(4 pi) sigma_r [1, 0]^T

reduces the self-interacting Dirac equation
``(i gamma^k d_k - 1/ell0 + lambda (phibar phi)) phi = 0`` to two radial ODEs

    g' + 2 g / r = (omega/c - 1/ell0 + kappa s) f
    f'           = -(omega/c + 1/ell0 - kappa s) g          ("dirac")

with ``s = f^2 - g^2`` and ``kappa = lambda / (4 pi)``.  The ``"displayed"``
convention flips the sign of ``kappa s`` in the second equation; it is kept for
reference but admits no localized solution for either sign of ``lambda``.

Regular solutions behave as ``f = C2, g = C1 r`` at the origin, with

    C1 = [(omega/c - 1/ell0) C2 + kappa C2^3] / 3

(insert the series into the g-equation: ``g' + 2g/r = 3 C1`` at leading
order), and as ``f = A exp(-nu r) / r``, ``g = -f'/B`` far away, where
``nu = sqrt(ell0^-2 - omega^2/c^2)`` and ``B = 1/ell0 + omega/c``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.integrate import quad, simpson, solve_ivp
from scipy.special import roots_legendre

from .exceptions import (
    BracketError,
    ConvergenceError,
    IntegrationError,
    InvalidFrequencyError,
    NormalizationError,
)
from ._io import write_csv, fmt

CONVENTIONS = ("dirac", "displayed")
RTOL = 1e-10
ATOL = 1e-12

DECAYED = "decayed"
BLEW_UP_POSITIVE = "blew_up_positive"
BLEW_UP_NEGATIVE = "blew_up_negative"


@dataclass(frozen=True)
class ModelParams:
    """Model constants.  ``lam`` is the self-coupling (``lambda``)."""

    ell0: float = 1.0
    lam: float = 4.0 * math.pi
    omega: float = 0.9
    hbar: float = 1.0
    c: float = 1.0
    convention: str = "dirac"

    def __post_init__(self):
        if not self.ell0 > 0:
            raise ValueError("ell0 must be > 0")
        if not self.hbar > 0:
            raise ValueError("hbar must be > 0")
        if not self.c > 0:
            raise ValueError("c must be > 0")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"convention must be one of {CONVENTIONS}")

    @property
    def kappa(self) -> float:
        return self.lam / (4.0 * math.pi)

    def check_frequency(self) -> None:
        if not (0.0 < self.omega < self.c / self.ell0):
            raise InvalidFrequencyError(
                f"omega={self.omega!r} outside the existence window "
                f"0 < omega < c/ell0 = {self.c / self.ell0!r}"
            )


@dataclass(frozen=True, eq=False)
class RadialGrid:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 3:
            raise ValueError("grid needs at least 3 points")
        if pts[0] <= 0:
            raise ValueError("r_min must be > 0")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, r_min: float, r_max: float, n: int) -> "RadialGrid":
        """``n`` equally spaced radii on ``[r_min, r_max]``."""
        if not r_min < r_max:
            raise ValueError("r_min must be < r_max")
        return cls(np.linspace(r_min, r_max, int(n)))

    @classmethod
    def default(cls, params: ModelParams, spacing: float = 0.01) -> "RadialGrid":
        """Grid reaching far enough for the tail beyond it to be negligible."""
        nu = decay_constants(params).nu
        r_max = max(40.0 * params.ell0, 40.0 / nu)
        n = int(math.ceil(r_max / (spacing * params.ell0))) | 1
        return cls.uniform(1e-4 * params.ell0, r_max, n)

    @property
    def r_min(self) -> float:
        return float(self.points[0])

    @property
    def r_max(self) -> float:
        return float(self.points[-1])

    def refined(self) -> "RadialGrid":
        """Insert midpoints (2x refinement)."""
        p = self.points
        out = np.empty(2 * p.size - 1)
        out[::2] = p
        out[1::2] = 0.5 * (p[:-1] + p[1:])
        return RadialGrid(out)


@dataclass(frozen=True)
class AsymptoticConstants:
    nu: float
    b_const: float
    a_tail: Optional[float] = None
    g_deviation: Optional[float] = None


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Radial functions on a grid.

    ``norm`` is ``int_0^inf r^2 (f^2 + g^2) dr``, including the analytic
    pieces below ``r_min`` and beyond the last grid point when a tail is
    attached.
    """

    grid: RadialGrid
    f: np.ndarray
    g: np.ndarray
    c2: float
    c1: float
    norm: float
    params: Optional[ModelParams] = None
    tail: Optional[AsymptoticConstants] = None
    trusted_radius: Optional[float] = None
    info: dict = field(default_factory=dict)

    @property
    def r(self) -> np.ndarray:
        return self.grid.points

    def scaled(self, s: float) -> "RadialProfile":
        """Amplitudes multiplied by ``s`` (coupling untouched)."""
        tail = self.tail
        if tail is not None and tail.a_tail is not None:
            tail = replace(tail, a_tail=s * tail.a_tail)
        return replace(
            self, f=s * self.f, g=s * self.g, c2=s * self.c2, c1=s * self.c1,
            norm=s * s * self.norm, tail=tail,
        )


@dataclass(frozen=True)
class ShootingConfig:
    """Bisection settings.  ``None`` bracket/threshold values are chosen
    automatically from the model parameters."""

    c2_lo: Optional[float] = None
    c2_hi: Optional[float] = None
    tolerance: float = 1e-13
    max_iterations: int = 200
    blowup_threshold: Optional[float] = None
    target_nodes: int = 0
    trust_tolerance: float = 1e-7

    def __post_init__(self):
        if self.c2_lo is not None and self.c2_hi is not None and not self.c2_lo < self.c2_hi:
            raise ValueError("c2_lo must be < c2_hi")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")


def radial_rhs(r: float, f: float, g: float, params: ModelParams) -> tuple[float, float]:
    """Right-hand sides ``(df/dr, dg/dr)`` of the radial system."""
    if not r > 0:
        raise ValueError("radial_rhs requires r > 0")
    kap = params.kappa
    w = params.omega / params.c
    m = 1.0 / params.ell0
    s = f * f - g * g
    dg = -2.0 * g / r + (w - m) * f + kap * s * f
    if params.convention == "dirac":
        df = -((w + m) * g - kap * s * g)
    else:
        df = -((w + m) * g + kap * s * g)
    return df, dg


def _rhs_fun(params: ModelParams):
    kap = params.kappa
    w = params.omega / params.c
    m = 1.0 / params.ell0
    sign = -1.0 if params.convention == "dirac" else 1.0

    def fun(r, y):
        f, g = y
        s = f * f - g * g
        return [-((w + m) * g + sign * kap * s * g), -2.0 * g / r + (w - m) * f + kap * s * f]

    return fun


def series_start(params: ModelParams, c2: float, r_min: float) -> tuple[float, float, float]:
    """Regular initial data ``(f0, g0, c1)`` at ``r_min`` from the origin series."""
    if not r_min > 0:
        raise ValueError("r_min must be > 0")
    w = params.omega / params.c
    m = 1.0 / params.ell0
    c1 = ((w - m) * c2 + params.kappa * c2 ** 3) / 3.0
    return float(c2), float(c1 * r_min), float(c1)


def decay_constants(params: ModelParams) -> AsymptoticConstants:
    params.check_frequency()
    m = 1.0 / params.ell0
    w = params.omega / params.c
    return AsymptoticConstants(nu=math.sqrt(m * m - w * w), b_const=m + w)


def equilibrium_amplitude(params: ModelParams) -> float:
    """Homogeneous solution ``f^2 = (1/ell0 - omega/c) / kappa`` that the
    growing mode saturates on; ``nan`` for non-attractive coupling."""
    if params.kappa <= 0:
        return float("nan")
    return math.sqrt((1.0 / params.ell0 - params.omega / params.c) / params.kappa)


def _default_threshold(params: ModelParams, c2: float) -> float:
    eq = equilibrium_amplitude(params)
    if math.isfinite(eq):
        return 0.5 * eq
    return 10.0 * max(abs(c2), 1.0)


def integrate_profile(
    params: ModelParams,
    c2: float,
    grid: RadialGrid,
    blowup_threshold: Optional[float] = None,
) -> tuple[RadialProfile, str, int]:
    """Integrate outward from the origin series with amplitude ``c2``.

    Blow-up is ``|f|`` rising through ``blowup_threshold`` (the growing mode
    taking over after the core has decayed) or either component exceeding a
    hard limit; the outcome carries the sign of ``f`` there.  A run reaching
    ``r_max`` counts as ``"decayed"`` only if ``|f|`` ends below the
    threshold.  The returned profile covers the
    grid points up to the radius where integration stopped.
    """
    thr = _default_threshold(params, c2) if blowup_threshold is None else float(blowup_threshold)
    hard = 1e6 * max(1.0, abs(c2), thr)
    f0, g0, c1 = series_start(params, c2, grid.r_min)
    r = grid.points

    if f0 == 0.0 and g0 == 0.0:
        zeros = np.zeros_like(r)
        prof = RadialProfile(grid, zeros, zeros.copy(), 0.0, 0.0, 0.0, params=params)
        return prof, DECAYED, 0

    fun = _rhs_fun(params)

    def ev_node(_r, y):
        return y[0]

    def ev_depart(_r, y):
        return abs(y[0]) - thr

    ev_depart.terminal = True
    ev_depart.direction = 1.0

    def ev_hard(_r, y):
        return max(abs(y[0]), abs(y[1])) - hard

    ev_hard.terminal = True

    with np.errstate(over="ignore", invalid="ignore"):
        sol = solve_ivp(
            fun, (grid.r_min, grid.r_max), [f0, g0], method="DOP853",
            rtol=RTOL, atol=ATOL, events=[ev_node, ev_depart, ev_hard],
            dense_output=True,
        )
    # a step-size collapse with large amplitude is a finite-radius singularity
    singular = sol.status == -1 and max(abs(sol.y[0, -1]), abs(sol.y[1, -1])) >= thr
    if sol.status == -1 and not singular:
        raise IntegrationError(f"radial integration failed for c2={c2!r}: {sol.message}")

    r_end = float(sol.t[-1])
    blown = sol.status == 1 or singular
    keep = r <= r_end
    keep[:3] = True
    rk = np.minimum(r[keep], r_end)
    if sol.sol is not None and sol.sol.interpolants:
        y = sol.sol(rk)
    else:   # failed on the first step
        y = np.repeat(sol.y[:, -1:], rk.size, axis=1)
    nodes = int(len(sol.t_events[0]))
    f_end = sol.y[0, -1]
    if blown or abs(f_end) >= thr:
        # a run that never dipped below the threshold has not decayed either
        outcome = BLEW_UP_POSITIVE if f_end > 0 else BLEW_UP_NEGATIVE
    else:
        outcome = DECAYED
    sub = RadialGrid(r[keep])
    norm = _norm_on_grid(sub.points, y[0], y[1], c2, c1)
    prof = RadialProfile(
        sub, y[0].copy(), y[1].copy(), float(c2), c1, norm, params=params,
        info={"r_end": r_end, "threshold": thr},
    )
    return prof, outcome, nodes


def _origin_piece(c2: float, c1: float, r_min: float) -> float:
    return c2 * c2 * r_min ** 3 / 3.0 + c1 * c1 * r_min ** 5 / 5.0


def _tail_piece(tail: AsymptoticConstants, r0: float) -> float:
    """``int_r0^inf r^2 (f^2 + g^2) dr`` for the analytic tail."""
    a, nu, b = tail.a_tail, tail.nu, tail.b_const
    ff = a * a * math.exp(-2.0 * nu * r0) / (2.0 * nu)

    def gg(x):
        return (a * math.exp(-nu * x) * (nu * x + 1.0) / (b * x)) ** 2

    val, _ = quad(gg, r0, np.inf, epsabs=0.0, epsrel=1e-12, limit=200)
    return ff + val


def _norm_on_grid(r, f, g, c2=0.0, c1=0.0, tail: Optional[AsymptoticConstants] = None) -> float:
    total = float(simpson(r * r * (f * f + g * g), x=r))
    total += _origin_piece(c2, c1, float(r[0]))
    if tail is not None and tail.a_tail is not None:
        total += _tail_piece(tail, float(r[-1]))
    return total


def profile_norm(profile: RadialProfile) -> float:
    """Recompute ``int_0^inf r^2 (f^2 + g^2) dr`` by quadrature."""
    return _norm_on_grid(profile.r, profile.f, profile.g, profile.c2, profile.c1, profile.tail)


def _is_overshoot(nodes: int, target: int) -> bool:
    return nodes > target


def bracket_ground_state(
    params: ModelParams, grid: RadialGrid, target_nodes: int = 0,
    blowup_threshold: Optional[float] = None, factor: float = 1.04, max_steps: int = 200,
) -> tuple[float, float]:
    """Geometric scan upward for an (under, over)-shooting pair of amplitudes.

    The step must stay small: far above the ground-state amplitude the
    solution becomes singular near the origin without producing a node.
    """
    eq = equilibrium_amplitude(params)
    if not math.isfinite(eq):
        raise BracketError("no attractive self-coupling (lambda <= 0): cannot bracket a soliton")
    # short grid is enough to classify
    probe = RadialGrid(grid.points[grid.points <= min(grid.r_max, 30.0 / decay_constants(params).nu)])
    c = 0.5 * eq
    prev = None
    for _ in range(max_steps):
        _, outcome, nodes = integrate_profile(params, c, probe, blowup_threshold)
        if _is_overshoot(nodes, target_nodes):
            if prev is None:
                raise BracketError("smallest probe amplitude already overshoots")
            return prev, c
        if outcome != DECAYED:
            prev = c
        c *= factor
    raise BracketError("no overshooting amplitude found while scanning c2")


def shoot_ground_state(
    params: ModelParams,
    config: Optional[ShootingConfig] = None,
    grid: Optional[RadialGrid] = None,
) -> RadialProfile:
    """Bisect on ``C2`` for the regular solution with ``target_nodes`` nodes.

    The returned profile equals the numerical solution up to the last radius
    where the two final bracket solutions agree to ``trust_tolerance``
    (relative), and the analytic tail ``A exp(-nu r)/r`` beyond it.
    """
    params.check_frequency()
    config = config or ShootingConfig()
    grid = grid or RadialGrid.default(params)
    thr = config.blowup_threshold
    tgt = config.target_nodes
    consts = decay_constants(params)

    if config.c2_lo is None or config.c2_hi is None:
        lo, hi = bracket_ground_state(params, grid, tgt, thr)
    else:
        lo, hi = float(config.c2_lo), float(config.c2_hi)

    p_lo, out_lo, n_lo = integrate_profile(params, lo, grid, thr)
    p_hi, out_hi, n_hi = integrate_profile(params, hi, grid, thr)
    if _is_overshoot(n_lo, tgt) == _is_overshoot(n_hi, tgt) or out_lo == out_hi:
        raise BracketError(
            f"bracket [{lo!r}, {hi!r}] does not straddle the solution: "
            f"outcomes ({out_lo}, {n_lo} nodes) and ({out_hi}, {n_hi} nodes)"
        )

    iterations = 0
    converged = False
    while iterations < config.max_iterations:
        if hi - lo <= config.tolerance * max(1.0, abs(hi)):
            converged = True
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            converged = True
            break
        iterations += 1
        p_mid, out_mid, n_mid = integrate_profile(params, mid, grid, thr)
        if out_mid == DECAYED and not _is_overshoot(n_mid, tgt):
            p_lo = p_hi = p_mid
            lo = hi = mid
            out_lo = out_hi = out_mid
            converged = True
            break
        if _is_overshoot(n_mid, tgt):
            hi, p_hi, out_hi = mid, p_mid, out_mid
        else:
            lo, p_lo, out_lo = mid, p_mid, out_mid
    if not converged:
        raise ConvergenceError(
            f"shooting did not converge in {config.max_iterations} iterations "
            f"(bracket width {hi - lo!r})"
        )

    # trusted radius: last point where the bracket solutions still agree
    n = min(p_lo.f.size, p_hi.f.size)
    fl, fh = p_lo.f[:n], p_hi.f[:n]
    gl, gh = p_lo.g[:n], p_hi.g[:n]
    scale = np.maximum(np.abs(fl), np.abs(fh))
    bad = np.abs(fl - fh) > config.trust_tolerance * scale
    bad |= fl <= 0
    f_mid = 0.5 * (fl + fh)
    # f may rise through the core; past its peak, a rise means the growing mode
    i_agree = int(np.argmax(bad)) if bad.any() else n
    i_peak = int(np.argmax(f_mid[: max(i_agree, 1)]))
    rising = np.zeros(n, dtype=bool)
    rising[1:] = np.diff(f_mid) >= 0
    rising[: i_peak + 1] = False
    bad |= rising
    i_bad = int(np.argmax(bad)) if bad.any() else n
    i_t = max(i_bad - 1, 2)
    r = grid.points
    r_t = float(r[i_t])

    f = np.empty_like(r)
    g = np.empty_like(r)
    f[: i_t + 1] = f_mid[: i_t + 1]
    g[: i_t + 1] = 0.5 * (gl[: i_t + 1] + gh[: i_t + 1])
    nu, b = consts.nu, consts.b_const
    a_tail = float(f[i_t] * r_t * math.exp(nu * r_t))
    rt = r[i_t + 1:]
    f[i_t + 1:] = a_tail * np.exp(-nu * rt) / rt
    g[i_t + 1:] = a_tail * np.exp(-nu * rt) * (nu * rt + 1.0) / (b * rt * rt)
    tail = AsymptoticConstants(nu=nu, b_const=b, a_tail=a_tail)

    c2 = 0.5 * (lo + hi)
    _, _, c1 = series_start(params, c2, grid.r_min)
    norm = _norm_on_grid(r, f, g, c2, c1, tail)
    info = {
        "iterations": iterations,
        "bracket": (lo, hi),
        "bracket_outcomes": (out_lo, out_hi),
        "bracket_nodes": (n_lo, n_hi),
        "fit_window": (0.5 * r_t, r_t),
    }
    return RadialProfile(
        grid, f, g, c2, c1, norm, params=params, tail=tail, trusted_radius=r_t, info=info,
    )


def resample(profile: RadialProfile, grid: RadialGrid) -> RadialProfile:
    """Re-solve the trusted part on ``grid`` at the converged amplitude.

    Used for quadrature-convergence checks: the numerical part is recomputed
    with the same initial data and the same analytic tail.
    """
    params = profile.params
    if params is None or profile.tail is None or profile.trusted_radius is None:
        raise ValueError("resample needs a shot profile with a tail")
    r = grid.points
    f0, g0, c1 = series_start(params, profile.c2, r[0])
    r_t = profile.trusted_radius
    sol = solve_ivp(
        _rhs_fun(params), (r[0], r_t), [f0, g0], method="DOP853",
        rtol=RTOL, atol=ATOL, dense_output=True,
    )
    inner = r <= r_t
    f = np.empty_like(r)
    g = np.empty_like(r)
    y = sol.sol(r[inner])
    f[inner], g[inner] = y
    # tail matched to the original amplitude
    t = profile.tail
    ro = r[~inner]
    f[~inner] = t.a_tail * np.exp(-t.nu * ro) / ro
    g[~inner] = t.a_tail * np.exp(-t.nu * ro) * (t.nu * ro + 1.0) / (t.b_const * ro * ro)
    norm = _norm_on_grid(r, f, g, profile.c2, c1, t)
    return replace(profile, grid=grid, f=f, g=g, norm=norm)


def normalize_profile(
    profile: RadialProfile, params: Optional[ModelParams] = None
) -> tuple[RadialProfile, ModelParams]:
    """Rescale to ``norm = hbar``; the coupling absorbs the scale (``lambda / s^2``)."""
    params = params or profile.params
    if params is None:
        raise ValueError("model parameters required")
    if not profile.norm > 0:
        raise NormalizationError("cannot normalize a zero profile")
    s = math.sqrt(params.hbar / profile.norm)
    new_params = replace(params, lam=params.lam / (s * s))
    scaled = profile.scaled(s)
    scaled = replace(scaled, params=new_params)
    scaled = replace(scaled, norm=profile_norm(scaled))
    return scaled, new_params


def rhs_residual(profile: RadialProfile, params: Optional[ModelParams] = None) -> float:
    """Max relative residual of the ODEs on the trusted part (finite differences)."""
    params = params or profile.params
    r = profile.r
    n = r.size if profile.trusted_radius is None else int(np.searchsorted(r, profile.trusted_radius))
    r, f, g = r[:n], profile.f[:n], profile.g[:n]
    df = np.gradient(f, r, edge_order=2)
    dg = np.gradient(g, r, edge_order=2)
    rf, rg = np.array([radial_rhs(ri, fi, gi, params) for ri, fi, gi in zip(r, f, g)]).T
    scale = max(np.abs(rf).max(), np.abs(rg).max())
    return float(max(np.abs(df - rf)[2:-2].max(), np.abs(dg - rg)[2:-2].max()) / scale)


def tail_fit(
    profile: RadialProfile,
    fit_window: Optional[tuple[float, float]] = None,
    b_const: Optional[float] = None,
) -> AsymptoticConstants:
    """Least-squares fit of ``log(r f) = log A - nu r`` over ``fit_window``.

    Also reports ``max|g + f'/B| / max|g|`` over the window, with ``f'`` from
    second-order finite differences.
    """
    if fit_window is None:
        fit_window = profile.info.get("fit_window")
        if fit_window is None:
            raise ValueError("fit_window required")
    r0, r1 = map(float, fit_window)
    r = profile.r
    if r0 < r[0] or r1 > r[-1] or not r0 < r1:
        raise ValueError(f"fit window {fit_window} outside grid [{r[0]}, {r[-1]}]")
    sel = (r >= r0) & (r <= r1)
    if sel.sum() < 3:
        raise ValueError("fit window contains fewer than 3 grid points")
    rw, fw = r[sel], profile.f[sel]
    if np.any(fw <= 0):
        raise ValueError("non-positive f inside the fit window")
    slope, intercept = np.polyfit(rw, np.log(rw * fw), 1)
    if b_const is None:
        if profile.params is None:
            raise ValueError("b_const or profile.params required")
        b_const = decay_constants(profile.params).b_const
    dfdr = np.gradient(profile.f, r, edge_order=2)[sel]
    gw = profile.g[sel]
    gmax = float(np.max(np.abs(gw)))
    dev = float(np.max(np.abs(gw + dfdr / b_const))) / gmax if gmax > 0 else math.inf
    return AsymptoticConstants(nu=float(-slope), b_const=float(b_const),
                               a_tail=float(math.exp(intercept)), g_deviation=dev)


def spin_expectation(
    profile: RadialProfile, hbar: Optional[float] = None, tolerance: float = 1e-6,
    require_normalized: bool = True,
) -> np.ndarray:
    """Soliton spin ``S = int phi^+ J phi`` from the closed reduction.

    On the ansatz ``J_z`` acts as ``+1/2`` on both the upper spinor and the
    ``sigma_r``-dressed lower spinor (``J`` commutes with ``sigma . r_hat``), and
    the transverse components integrate to zero over the azimuth, hence
    ``S = (0, 0, norm / 2)``.
    """
    if hbar is None:
        hbar = profile.params.hbar if profile.params is not None else 1.0
    if require_normalized and abs(profile.norm - hbar) / hbar > tolerance:
        raise NormalizationError(
            f"profile norm {profile.norm!r} differs from hbar={hbar!r}; normalize first"
        )
    return np.array([0.0, 0.0, 0.5 * profile.norm])


# --- direct 3D quadrature -------------------------------------------------------

_SIGMA = np.array(
    [[[0, 1], [1, 0]], [[0, -1j], [1j, 0]], [[1, 0], [0, -1]]], dtype=complex
)


def angular_spinor(theta, alpha, spin: int = +1):
    """Angular parts ``(U, V)`` of the ansatz: ``u = f U``, ``v = g V``.

    ``spin=+1`` uses ``chi = [1, 0]``, ``spin=-1`` uses ``chi = [0, 1]``.
    Shapes broadcast over ``theta`` and ``alpha``; a trailing axis of length 2
    holds the spinor components.
    """
    theta, alpha = np.broadcast_arrays(np.asarray(theta, float), np.asarray(alpha, float))
    chi = np.array([1.0, 0.0]) if spin > 0 else np.array([0.0, 1.0])
    norm = 1.0 / math.sqrt(4.0 * math.pi)
    st, ct = np.sin(theta), np.cos(theta)
    sigma_r = (
        (st * np.cos(alpha))[..., None, None] * _SIGMA[0]
        + (st * np.sin(alpha))[..., None, None] * _SIGMA[1]
        + ct[..., None, None] * _SIGMA[2]
    )
    u = np.broadcast_to(norm * chi.astype(complex), theta.shape + (2,))
    v = 1j * norm * (sigma_r @ chi)
    return u, v


def _angular_J(theta, alpha, spin: int, h: float = 1e-3):
    """``J_i`` applied to ``(U, V)`` on a (theta, alpha) grid.

    ``L = -i r x grad`` in spherical form; ``d/d alpha`` spectrally (uniform
    periodic azimuth), ``d/d theta`` by a 4th-order central difference.
    """
    n_alpha = alpha.shape[1]
    u, v = angular_spinor(theta, alpha, spin)
    out = []
    k = np.fft.fftfreq(n_alpha, d=1.0 / n_alpha)

    def d_alpha(z):
        return np.fft.ifft(1j * k[None, :, None] * np.fft.fft(z, axis=1), axis=1)

    def d_theta(part):
        def at(dt):
            uu, vv = angular_spinor(theta + dt, alpha, spin)
            return uu if part == 0 else vv

        return (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)

    cot = (np.cos(theta) / np.sin(theta))[..., None]
    ca = np.cos(alpha)[..., None]
    sa = np.sin(alpha)[..., None]
    for part, z in ((0, u), (1, v)):
        z = np.asarray(z)
        dz_a = d_alpha(z)
        dz_t = d_theta(part)
        lx = 1j * (sa * dz_t + cot * ca * dz_a)
        ly = 1j * (-ca * dz_t + cot * sa * dz_a)
        lz = -1j * dz_a
        comps = []
        for i, lz_i in enumerate((lx, ly, lz)):
            comps.append(lz_i + 0.5 * np.einsum("ab,...b->...a", _SIGMA[i], z))
        out.append(comps)
    return (u, v), out


def angular_matrix_elements(n_theta: int = 24, n_alpha: int = 24):
    """Angular integrals for the spin-up/down basis.

    Returns ``(gram, j)`` with ``gram[p][s, t] = int dOmega X_s^+ X_t`` and
    ``j[p][i][s, t] = int dOmega X_s^+ (J_i X_t)``, where ``p = 0`` picks the
    upper spinor ``U`` and ``p = 1`` the lower one ``V``; ``s, t`` index spin
    up/down.  Gauss-Legendre in ``cos(theta)`` and the trapezoid rule in the
    azimuth.
    """
    x, w = roots_legendre(n_theta)
    theta1 = np.arccos(x)
    alpha1 = 2.0 * math.pi * np.arange(n_alpha) / n_alpha
    theta, alpha = np.meshgrid(theta1, alpha1, indexing="ij")
    wq = (w[:, None] * np.full(n_alpha, 2.0 * math.pi / n_alpha)[None, :])
    fields = {}
    for s_idx, spin in enumerate((+1, -1)):
        fields[s_idx] = _angular_J(theta, alpha, spin)
    gram = np.zeros((2, 2, 2), dtype=complex)
    jm = np.zeros((2, 3, 2, 2), dtype=complex)
    for p in (0, 1):
        for s in (0, 1):
            xs = fields[s][0][p]
            for t in (0, 1):
                xt = fields[t][0][p]
                gram[p, s, t] = np.sum(wq * np.einsum("...a,...a->...", xs.conj(), xt))
                for i in range(3):
                    jt = fields[t][1][p][i]
                    jm[p, i, s, t] = np.sum(wq * np.einsum("...a,...a->...", xs.conj(), jt))
    return gram, jm


def radial_moments(profile: RadialProfile) -> tuple[float, float]:
    """``(int r^2 f^2, int r^2 g^2)`` over the grid by Simpson's rule."""
    r = profile.r
    return (float(simpson(r * r * profile.f ** 2, x=r)), float(simpson(r * r * profile.g ** 2, x=r)))


def spin_expectation_quadrature(
    profile: RadialProfile, n_theta: int = 24, n_alpha: int = 24, chunk: int = 256,
) -> np.ndarray:
    """``S = int d^3x phi^+ J phi`` by direct spherical quadrature of the 4-spinor.

    The full field ``phi(r, theta, alpha)`` is built on a product grid (radial
    profile grid x Gauss-Legendre x uniform azimuth), ``J`` is applied
    component-wise with numerical angular derivatives and the integrand is
    summed with the product weights.  Independent of the closed reduction
    used by :func:`spin_expectation`.
    """
    x, w = roots_legendre(n_theta)
    theta1 = np.arccos(x)
    alpha1 = 2.0 * math.pi * np.arange(n_alpha) / n_alpha
    theta, alpha = np.meshgrid(theta1, alpha1, indexing="ij")
    wq = w[:, None] * (2.0 * math.pi / n_alpha)
    (u, v), jx = _angular_J(theta, alpha, +1)
    r = profile.r
    per_r = np.zeros((r.size, 3))
    for start in range(0, r.size, chunk):
        sl = slice(start, start + chunk)
        fr = profile.f[sl][:, None, None, None]
        gr = profile.g[sl][:, None, None, None]
        phi = np.concatenate([fr * u[None], gr * v[None]], axis=-1)
        for i in range(3):
            jphi = np.concatenate([fr * jx[0][i][None], gr * jx[1][i][None]], axis=-1)
            dens = np.einsum("...a,...a->...", phi.conj(), jphi)
            per_r[sl, i] = np.real(np.sum(wq[None] * dens, axis=(1, 2)))
    s = np.array([float(simpson(r * r * per_r[:, i], x=r)) for i in range(3)])
    return s


# --- serialization --------------------------------------------------------------


def profile_metadata(profile: RadialProfile) -> dict:
    p = profile.params
    tail = profile.tail
    return {
        "ell0": p.ell0 if p else None,
        "lambda": p.lam if p else None,
        "omega": p.omega if p else None,
        "hbar": p.hbar if p else None,
        "c": p.c if p else None,
        "convention": p.convention if p else None,
        "c2": profile.c2,
        "norm": profile.norm,
        "nu": tail.nu if tail else None,
        "B": tail.b_const if tail else None,
        "A": tail.a_tail if tail else None,
        "trusted_radius": profile.trusted_radius,
    }


def write_profile(profile: RadialProfile, path: str | Path) -> tuple[Path, Path]:
    """CSV ``r,f,g`` plus a JSON sidecar ``<stem>.meta.json``."""
    path = Path(path)
    write_csv(path, ["r", "f", "g"], zip(profile.r, profile.f, profile.g))
    meta = path.with_suffix(".meta.json")
    meta.write_text(json.dumps({k: fmt(v) if isinstance(v, float) else v
                                for k, v in profile_metadata(profile).items()}, indent=2) + "\n")
    return path, meta


def read_profile(path: str | Path) -> RadialProfile:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = json.loads(path.with_suffix(".meta.json").read_text())
    flt = {k: (float(v) if isinstance(v, str) and k != "convention" else v) for k, v in meta.items()}
    params = ModelParams(ell0=flt["ell0"], lam=flt["lambda"], omega=flt["omega"],
                         hbar=flt.get("hbar") or 1.0, c=flt.get("c") or 1.0,
                         convention=flt.get("convention") or "dirac")
    tail = None
    if flt.get("nu") is not None:
        tail = AsymptoticConstants(nu=flt["nu"], b_const=flt["B"], a_tail=flt.get("A"))
    _, _, c1 = series_start(params, flt["c2"], float(data[0, 0]))
    return RadialProfile(RadialGrid(data[:, 0]), data[:, 1], data[:, 2], flt["c2"], c1,
                         flt["norm"], params=params, tail=tail,
                         trusted_radius=flt.get("trusted_radius"))

"""Batch front-end: ``solitonqm <command> [options]``.

Every run writes ``<output_dir>/<command>/<label or timestamp>/report.json``
plus CSV tables.  Parameters come from defaults, then an optional flat
``key = value`` file (``--config``), then command-line flags.

Exit codes: 0 all checks pass, 1 a check failed, 2 usage error, 3 numerical
failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import __version__
from ._io import write_csv, write_json
from ._rng import DEFAULT_SEED, substream
from .exceptions import NumericalError, SolitonQMError
from .epr_entanglement import (
    CURVE_HEADER,
    build_entangled_pair,
    correlation_curve,
    soliton_spin_correlation_mc,
)
from .random_ensemble import (
    BumpProfile,
    EnsembleConfig,
    born_rule_check,
    chebyshev_bound_check,
    lattice_plane_wave_demo,
    observable_budget,
    observable_mean,
    sample_ensemble,
)
from .spinor_soliton import (
    ModelParams,
    RadialGrid,
    ShootingConfig,
    decay_constants,
    normalize_profile,
    profile_metadata,
    rhs_residual,
    shoot_ground_state,
    spin_expectation,
    spin_expectation_quadrature,
    tail_fit,
    write_profile,
)
from .stochastic_qubit import (
    MINUS,
    ONE,
    PLUS,
    TABLE_HEADER,
    ZERO,
    ProbBit,
    chsh_scan,
    cnot,
    dichotomic_correlation,
    hadamard,
    initialize_register,
)
from .wiener_space import covariance_check, unit_functions, unitarity_check

OUTPUT_ENV = "SOLITONQM_OUTPUT"
DEFAULT_OUTPUT = "solitonqm-runs"

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _boolean(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text) -> Optional[float]:
    if text is None or str(text).strip().lower() in ("", "none"):
        return None
    return float(text)


class Param(NamedTuple):
    name: str
    type: Callable[[Any], Any]
    default: Any
    help: str


_MODEL = (
    Param("ell0", float, 1.0, "length scale"),
    Param("lambda", float, 4 * math.pi, "self-coupling"),
    Param("omega", float, 0.9, "frequency, 0 < omega < c/ell0"),
    Param("hbar", float, 1.0, "action unit"),
    Param("c", float, 1.0, "speed of light"),
    Param("spacing", float, 0.01, "radial grid step in units of ell0"),
)
_BUMP = (
    Param("support_radius", float, 0.5, "bump support radius R"),
    Param("power", int, 6, "bump exponent p"),
    Param("hbar", float, 1.0, "action unit"),
)

COMMAND_PARAMS: dict[str, tuple[Param, ...]] = {
    "soliton-solve": _MODEL,
    "soliton-spin": _MODEL + (
        Param("n_theta", int, 24, "Gauss-Legendre nodes in theta"),
        Param("n_alpha", int, 24, "azimuth nodes"),
    ),
    "ensemble-born": _BUMP + (
        Param("n_particles", int, 1, "particles per trial"),
        Param("n_trials", int, 10_000, "trials N"),
        Param("domain_length", float, 2000.0, "box [0, L] per axis"),
        Param("cell_volume", _optional_float, None, "cell volume per particle (default 100 * 10^(n-1))"),
        Param("packing_alpha", float, 1.0, "packing factor alpha"),
    ),
    "ensemble-observable": _BUMP + (
        Param("n_particles", int, 1, "particles per trial"),
        Param("n_trials", int, 10_000, "trials N"),
        Param("domain_length", float, 2000.0, "box [0, L]"),
        Param("cell_volume", float, 100.0, "cell volume setting the budget"),
        Param("carrier", float, 2.0, "carrier wavevector k0"),
    ),
    "ensemble-chebyshev": _BUMP + (
        Param("n_particles", int, 1, "particles per trial"),
        Param("n_trials", int, 1000, "trials per ensemble"),
        Param("domain_length", float, 200.0, "box [0, L] per axis"),
        Param("cell_volume", float, 10.0, "central cell volume per particle"),
        Param("packing_alpha", float, 1.0, "packing factor alpha"),
        Param("repetitions", int, 200, "independent ensembles"),
    ),
    "ensemble-lattice": _BUMP + (
        Param("lattice_spacing", float, 20.0, "node spacing a"),
        Param("carrier", float, 2.0, "carrier wavevector k"),
        Param("n_nodes", int, 1001, "lattice nodes"),
        Param("window_periods", int, 10, "fit window in lattice periods"),
        Param("max_fit_error", _optional_float, None, "optional fit-error threshold to check"),
    ),
    "wiener-check": (
        Param("n_paths", int, 10_000, "path pairs for unitarity"),
        Param("n_cov_paths", int, 100_000, "paths for the covariance check"),
        Param("n_intervals", int, 1024, "partition size M"),
    ),
    "epr-exact": _MODEL + (
        Param("n_angles", int, 181, "sweep points on [0, pi]"),
    ),
    "epr-mc": _MODEL + (
        Param("n_trials", int, 10_000, "random phases per ensemble"),
        Param("n_replicas", int, 200, "independent ensembles per estimate"),
        Param("n_pairs", int, 20, "random direction pairs"),
        Param("n_angles", int, 13, "coplanar curve points on [0, pi]"),
    ),
    "qubit-correlation": (
        Param("n_samples", int, 100_000, "phases per estimate"),
        Param("n_pairs", int, 50, "random angle pairs"),
        Param("min_fraction", float, 0.96, "required fraction within 3 standard errors"),
    ),
    "qubit-chsh": (
        Param("model", str, "triangle", "triangle or qm_cosine"),
        Param("resolution", int, 128, "grid points per angle"),
        Param("refine", _boolean, True, "polish the grid maximum"),
    ),
    "qubit-circuit": (
        Param("n_bits", int, 2, "register width for initialization"),
        Param("n_angles", int, 16, "random amplitudes for the involution checks"),
    ),
}

GLOBAL_KEYS = {"seed": int, "workers": int, "label": str, "output_dir": str}


@dataclass
class RunConfig:
    command: str
    seed: int = DEFAULT_SEED
    output_dir: Path = Path(DEFAULT_OUTPUT)
    parameters: dict = field(default_factory=dict)
    workers: int = 1
    label: Optional[str] = None

    def echo(self) -> dict:
        return {"command": self.command, "seed": self.seed, "workers": self.workers,
                "label": self.label, "output_dir": str(self.output_dir),
                "parameters": dict(self.parameters)}


class Check(NamedTuple):
    passed: bool
    value: Any
    limit: Any
    detail: str = ""


@dataclass
class RunReport:
    config: RunConfig
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0
    version: str = __version__
    run_dir: Optional[Path] = None
    files: list = field(default_factory=list)
    writers: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def check(self, name: str, passed, value=None, limit=None, detail: str = "") -> None:
        if name in self.checks:
            raise KeyError(f"check {name!r} recorded twice")
        self.checks[name] = Check(bool(passed), value, limit, detail)

    def table(self, name: str, header: Sequence[str], rows) -> None:
        self.tables[name] = (tuple(header), [tuple(r) for r in rows])

    def writer(self, fn: Callable[[Path], Sequence[Path]]) -> None:
        """Extra output produced by ``fn(run_dir)``."""
        self.writers.append(fn)

    def as_dict(self) -> dict:
        return {
            "command": self.config.command,
            "version": self.version,
            "config": self.config.echo(),
            "passed": self.passed,
            "checks": {k: c._asdict() for k, c in self.checks.items()},
            "summary": self.summary,
            "files": [str(f) for f in self.files],
            "wall_time_s": self.wall_time,
        }


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def _key(name: str) -> str:
    return name.strip().replace("-", "_")


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected 'key = value'")
        k, v = line.split("=", 1)
        out[_key(k)] = v.strip()
    return out


def _global_args(parser: argparse.ArgumentParser) -> None:
    s = argparse.SUPPRESS
    parser.add_argument("--seed", type=int, default=s, help=f"base seed (default {DEFAULT_SEED})")
    parser.add_argument("--workers", type=int, default=s, help="worker threads (default 1)")
    parser.add_argument("--label", default=s, help="run directory name (default: timestamp)")
    parser.add_argument("--output-dir", dest="output_dir", default=s,
                        help=f"output root (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    parser.add_argument("--config", default=s, help="flat key = value parameter file")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="solitonqm", description="Soliton models of quantum statistics: batch runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_args(parser)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    for cmd, params in COMMAND_PARAMS.items():
        p = sub.add_parser(cmd, help=f"run {cmd}")
        _global_args(p)
        for prm in params:
            p.add_argument("--" + prm.name.replace("_", "-"), dest=prm.name, type=str,
                           default=argparse.SUPPRESS, help=f"{prm.help} (default {prm.default})")
    return parser


def _convert(cmd: str, prm: Param, raw) -> Any:
    try:
        return prm.type(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{cmd}: malformed value {raw!r} for {prm.name}") from exc


def parse_config(argv: Sequence[str], config_file: Optional[str | Path] = None) -> RunConfig:
    """Defaults, then the config file, then flags."""
    ns = vars(build_parser().parse_args(list(argv)))
    cmd = ns.pop("command", None)
    if cmd is None:
        raise UsageError("solitonqm: a command is required")
    params_spec = {p.name: p for p in COMMAND_PARAMS[cmd]}
    config_file = ns.pop("config", config_file)
    file_vals = read_config_file(config_file) if config_file is not None else {}
    unknown = sorted(set(file_vals) - set(params_spec) - set(GLOBAL_KEYS))
    if unknown:
        raise UsageError(f"{cmd}: unknown config key(s): {', '.join(unknown)}")

    params = {p.name: p.default for p in params_spec.values()}
    for k, v in file_vals.items():
        if k in params_spec:
            params[k] = _convert(cmd, params_spec[k], v)
    for k in params_spec:
        if k in ns:
            params[k] = _convert(cmd, params_spec[k], ns.pop(k))

    glob = {"seed": DEFAULT_SEED, "workers": 1, "label": None,
            "output_dir": os.environ.get(OUTPUT_ENV, DEFAULT_OUTPUT)}
    for k, conv in GLOBAL_KEYS.items():
        raw = ns.get(k, file_vals.get(k))
        if raw is not None:
            try:
                glob[k] = conv(raw)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{cmd}: malformed value {raw!r} for {k}") from exc
    if glob["workers"] < 1:
        raise UsageError(f"{cmd}: workers must be >= 1")
    if not 0 <= glob["seed"] < 2 ** 64:
        raise UsageError(f"{cmd}: seed must be a 64-bit unsigned integer")
    return RunConfig(cmd, glob["seed"], Path(glob["output_dir"]), params, glob["workers"], glob["label"])


# --------------------------------------------------------------------------
# command handlers
# --------------------------------------------------------------------------

def _model(p: dict) -> ModelParams:
    return ModelParams(ell0=p["ell0"], lam=p["lambda"], omega=p["omega"], hbar=p["hbar"], c=p["c"])


def _solve(p: dict):
    params = _model(p)
    params.check_frequency()
    return shoot_ground_state(params, ShootingConfig(), RadialGrid.default(params, spacing=p["spacing"]))


def _bump(p: dict, dimension: int = 1) -> BumpProfile:
    return BumpProfile(dimension, p["support_radius"], p["power"], p["hbar"])


def run_soliton_solve(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof = _solve(p)
    fit = tail_fit(prof)
    expected_nu = decay_constants(prof.params).nu
    rel = abs(fit.nu - expected_nu) / expected_nu
    normed, nparams = normalize_profile(prof)
    rep.check("tail_decay_rate", rel < 0.02, rel, 0.02, "relative error of fitted nu")
    rep.check("lower_component_tail", fit.g_deviation < 0.01, fit.g_deviation, 0.01,
              "max|g + f'/B| / max|g| over the fit window")
    norm_err = abs(normed.norm - nparams.hbar) / nparams.hbar
    rep.check("normalized_to_hbar", norm_err < 1e-6, norm_err, 1e-6)
    rep.summary.update(profile_metadata(prof))
    rep.summary.update({"fitted_nu": fit.nu, "expected_nu": expected_nu,
                        "fit_window": list(prof.info["fit_window"]), "rhs_residual": rhs_residual(prof),
                        "normalized_lambda": nparams.lam})
    rep.writer(lambda d: write_profile(prof, d / "profile.csv"))


def run_soliton_spin(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof, params = normalize_profile(_solve(p))
    hbar = params.hbar
    s = spin_expectation(prof)
    q = spin_expectation_quadrature(prof, p["n_theta"], p["n_alpha"])
    dz = abs(s[2] - 0.5 * hbar) / hbar
    dxy = float(max(abs(s[0]), abs(s[1])) / hbar)
    qdz = abs(q[2] - s[2]) / abs(s[2])
    qdxy = float(max(abs(q[0]), abs(q[1])) / hbar)
    rep.check("spin_z_half_hbar", dz < 1e-6, dz, 1e-6)
    rep.check("spin_transverse_zero", dxy < 1e-10, dxy, 1e-10)
    rep.check("quadrature_agreement", qdz < 1e-6, qdz, 1e-6, "relative, z component")
    rep.check("quadrature_transverse_zero", qdxy < 1e-10, qdxy, 1e-10)
    rep.summary.update({"closed_form": list(s), "quadrature": list(q), "norm": prof.norm})
    rep.table("spin", ("component", "closed_form", "quadrature"),
              [(ax, s[i], q[i]) for i, ax in enumerate("xyz")])


def _line_config(p: dict, seed: int, profile: BumpProfile, **extra) -> EnsembleConfig:
    n = p["n_particles"]
    return EnsembleConfig(n_particles=n, n_trials=p["n_trials"], domain=((0.0, p["domain_length"]),),
                          proper_volume=profile.proper_volume, seed=seed, **extra)


def run_ensemble_born(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof = _bump(p)
    cell = p["cell_volume"]
    if cell is None:
        cell = 100.0 * 10.0 ** (p["n_particles"] - 1)
    conf = _line_config(p, cfg.seed, prof, cell_volume=cell, packing_alpha=p["packing_alpha"])
    trials = sample_ensemble(conf, prof, workers=cfg.workers)
    res = born_rule_check(conf, trials, prof)
    rep.check("born_rule_all_cells", res.passed, res.max_ratio, 1.0,
              "max |rho_cell - freq| / budget over cells")
    rep.summary.update({"n_cells": len(res.cells), "max_deviation": res.max_deviation,
                        "cross_scale": res.cross_scale, "cell_volume": cell})
    rep.table("born", ("cell_index", "rho_cell", "freq", "bound"), res.rows())


def run_ensemble_observable(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof = _bump(p)
    k0 = p["carrier"]
    conf = _line_config(p, cfg.seed, prof, cell_volume=p["cell_volume"], carrier=(k0,))
    trials = sample_ensemble(conf, prof, workers=cfg.workers)
    ens, quad_ = observable_mean(trials, prof, "translation", per_particle=True)
    hbar = prof.hbar
    expected = hbar * k0
    rel = np.abs(ens - expected) / abs(expected)
    budget = observable_budget(conf, expected)
    gap = np.abs(ens - quad_)
    rep.check("momentum_per_particle", bool(np.all(rel < 0.01)), float(rel.max()), 0.01,
              "relative error of the ensemble mean vs hbar k0")
    rep.check("ensemble_vs_quadrature", bool(np.all(gap <= budget)), float(gap.max()), budget)
    rep.table("observable", ("particle", "ensemble_mean", "quadrature_mean", "expected"),
              [(k, ens[k], quad_[k], expected) for k in range(ens.size)])


def run_ensemble_chebyshev(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof = _bump(p)
    conf = _line_config(p, cfg.seed, prof, cell_volume=p["cell_volume"], packing_alpha=p["packing_alpha"])
    res = chebyshev_bound_check(conf, prof, p["repetitions"], workers=cfg.workers)
    rep.check("exceedance_within_bound", res.passed, res.exceed_frequency,
              res.bound + 3 * res.sigma_binomial)
    rep.summary.update({"bound": res.bound, "sigma_binomial": res.sigma_binomial,
                        "mean_ratio": res.mean_ratio})
    hb = prof.hbar ** conf.n_particles
    rep.table("chebyshev", ("repetition", "cross_term", "count", "exceeds"),
              [(i, s, c, bool(abs(s) > hb * c)) for i, (s, c) in enumerate(zip(res.s_values, res.counts))])


def run_ensemble_lattice(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    prof = _bump(p)
    res = lattice_plane_wave_demo(prof, p["lattice_spacing"], p["carrier"], p["n_nodes"], p["window_periods"])
    amp_err = abs(res.fitted_amplitude - res.oracle_amplitude) / max(abs(res.oracle_amplitude), 1e-300)
    rep.check("amplitude_matches_dft", amp_err < 1e-9, amp_err, 1e-9)
    off = abs(res.dft_peak_k - p["carrier"])
    rep.check("dft_peak_at_carrier", off <= res.dft_resolution, off, res.dft_resolution)
    if p["max_fit_error"] is not None:
        rep.check("fit_error", res.fit_error < p["max_fit_error"], res.fit_error, p["max_fit_error"])
    rep.summary.update({"fit_error": res.fit_error, "oracle_amplitude": res.oracle_amplitude,
                        "fitted_amplitude": res.fitted_amplitude, "dft_peak_k": res.dft_peak_k})
    rep.table("lattice", ("spacing", "k", "fit_error", "amplitude_re", "amplitude_im", "oracle", "dft_peak_k"),
              [(p["lattice_spacing"], p["carrier"], res.fit_error, res.fitted_amplitude.real,
                res.fitted_amplitude.imag, res.oracle_amplitude, res.dft_peak_k)])


COVARIANCE_PAIRS = ((0.1, 0.2), (0.3, 0.7), (1.0, 1.0), (0.5, 0.5), (0.25, 0.75),
                    (0.9, 0.1), (0.05, 0.95), (0.625, 0.375), (0.125, 0.5), (0.8, 0.8))


def run_wiener_check(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    rows = []
    for name, psi in unit_functions(p["n_intervals"]).items():
        u = unitarity_check(psi, p["n_paths"], seed=cfg.seed, workers=cfg.workers)
        rep.check(f"unitarity_{name}", u.passed, u.z_score, 3.0, "z-score")
        rows.append((name, u.riemann_sum, u.mc_mean, u.std_error, u.z_score))
    rep.table("unitarity", ("function", "riemann_sum", "mc_mean", "stderr", "z"), rows)
    cov = covariance_check(COVARIANCE_PAIRS, p["n_cov_paths"], p["n_intervals"], seed=cfg.seed,
                           workers=cfg.workers)
    rep.check("brownian_covariance", cov.passed, float(np.abs(cov.z_scores).max()), 3.0, "max |z|")
    rep.table("covariance", ("s", "s_prime", "expected", "estimate", "stderr", "z"),
              [(a, b, e, m, s, z) for (a, b), e, m, s, z in
               zip(cov.pairs, cov.expected, cov.estimate, cov.std_error, cov.z_scores)])


def _pair(p: dict):
    prof, _ = normalize_profile(_solve(p))
    return build_entangled_pair(prof)


def run_epr_exact(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    pair = _pair(p)
    angles = np.linspace(0.0, math.pi, p["n_angles"])
    rows = correlation_curve(pair, angles)
    dev = max(abs(r[2] + math.cos(r[0])) for r in rows)
    qdev = max(abs(r[1] + math.cos(r[0])) for r in rows)
    hb2 = pair.hbar ** 2
    nerr = abs(pair.norm_pair - hb2) / hb2
    rep.check("soliton_matches_minus_cos", dev < 1e-6, dev, 1e-6)
    rep.check("pauli_matches_minus_cos", qdev < 1e-12, qdev, 1e-12)
    rep.check("pair_norm_hbar_squared", nerr < 1e-6, nerr, 1e-6)
    rep.summary.update({"norm_pair": pair.norm_pair, "max_deviation": dev})
    rep.table("curve", CURVE_HEADER, rows)


def _random_direction(rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def run_epr_mc(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    pair = _pair(p)
    rng = substream(cfg.seed, "cli:directions", 0)
    rows, zs = [], []
    for i in range(p["n_pairs"]):
        a, b = _random_direction(rng), _random_direction(rng)
        mc = soliton_spin_correlation_mc(pair, a, b, p["n_trials"], p["n_replicas"],
                                         seed=cfg.seed + i, workers=cfg.workers)
        z = (mc.estimate - mc.exact) / mc.std_error
        zs.append(z)
        rows.append((i, *a, *b, mc.exact, mc.estimate, mc.std_error, z))
    zmax = float(np.max(np.abs(zs)))
    rep.check("mc_within_3_stderr", zmax <= 3.0, zmax, 3.0, "max |z| over direction pairs")
    rep.table("pairs", ("pair", "ax", "ay", "az", "bx", "by", "bz", "exact", "estimate", "stderr", "z"), rows)
    angles = np.linspace(0.0, math.pi, p["n_angles"])
    rep.table("curve", CURVE_HEADER, correlation_curve(pair, angles, True, p["n_trials"], p["n_replicas"],
                                                       seed=cfg.seed, workers=cfg.workers))


def run_qubit_correlation(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    rng = substream(cfg.seed, "cli:angles", 0)
    rows, inside = [], 0
    for i in range(p["n_pairs"]):
        t1, t2 = rng.uniform(-math.pi, math.pi, 2)
        est = dichotomic_correlation(t1, t2, p["n_samples"], seed=cfg.seed + i, workers=cfg.workers)
        inside += abs(est.estimate - est.analytic) <= 3 * est.std_error
        rows.append((t1, t2, est.analytic, est.estimate, est.std_error))
    frac = inside / p["n_pairs"]
    rep.check("triangle_law", frac >= p["min_fraction"], frac, p["min_fraction"],
              "fraction of pairs within 3 standard errors")
    rep.table("correlation", TABLE_HEADER, rows)


def run_qubit_chsh(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    res = chsh_scan(p["model"], p["resolution"], p["refine"], workers=cfg.workers)
    if res.model == "triangle":
        rep.check("local_bound", res.max_S <= 2 + 1e-9, res.max_S, 2 + 1e-9)
    else:
        rep.check("tsirelson_value", 2.8274 <= res.max_S <= 2.8285, res.max_S, [2.8274, 2.8285])
    rep.summary.update({"model": res.model, "max_S": res.max_S, "argmax_angles": list(res.argmax_angles),
                        "resolution": res.resolution, "grid_max": res.grid_max})
    rep.table("chsh", ("model", "max_S", "a", "a_prime", "b", "b_prime", "resolution"),
              [(res.model, res.max_S, *res.argmax_angles, res.resolution)])


def _bit_row(gate: str, inp: str, out: ProbBit, expected: ProbBit):
    return (gate, inp, str(out.p), str(out.q), out.k, out == expected)


def run_qubit_circuit(cfg: RunConfig, rep: RunReport) -> None:
    p = cfg.parameters
    rows = []
    names = {"0": ZERO, "1": ONE, "+": PLUS, "-": MINUS}
    for inp, exp in (("0", PLUS), ("1", MINUS), ("+", ZERO), ("-", ONE)):
        rows.append(_bit_row("H", inp, hadamard(names[inp]), exp))
    for c in (0, 1):
        for inp in ("0", "1"):
            exp = names[inp] if c == 0 else names["1" if inp == "0" else "0"]
            rows.append(_bit_row(f"CNOT[c={c}]", inp, cnot(c, names[inp]), exp))
    rep.check("truth_tables", all(r[-1] for r in rows), sum(r[-1] for r in rows), len(rows))
    rng = substream(cfg.seed, "cli:circuit", 0)
    bits = [ProbBit.at_angle(t) for t in rng.uniform(0, 2 * math.pi, p["n_angles"])]
    rep.check("hadamard_involution", all(hadamard(hadamard(b)) == b for b in bits), len(bits), len(bits))
    rep.check("cnot_involution", all(cnot(c, cnot(c, b)) == b for b in bits for c in (0, 1)),
              len(bits), len(bits))
    regs = {s: initialize_register(p["n_bits"], forced_signal=s) for s in (1, -1)}
    ok = all(r.values == (0 if s == 1 else 1,) * p["n_bits"] for s, r in regs.items())
    rep.check("register_initialization", ok, p["n_bits"], p["n_bits"])
    reg = initialize_register(p["n_bits"], rng=rng)
    rep.summary["sampled_register"] = {"signal": reg.signal, "values": list(reg.values)}
    rep.table("circuit", ("gate", "input", "out_p", "out_q", "out_k", "matches"), rows)


HANDLERS: dict[str, Callable[[RunConfig, RunReport], None]] = {
    "soliton-solve": run_soliton_solve,
    "soliton-spin": run_soliton_spin,
    "ensemble-born": run_ensemble_born,
    "ensemble-observable": run_ensemble_observable,
    "ensemble-chebyshev": run_ensemble_chebyshev,
    "ensemble-lattice": run_ensemble_lattice,
    "wiener-check": run_wiener_check,
    "epr-exact": run_epr_exact,
    "epr-mc": run_epr_mc,
    "qubit-correlation": run_qubit_correlation,
    "qubit-chsh": run_qubit_chsh,
    "qubit-circuit": run_qubit_circuit,
}


def _run_dir(cfg: RunConfig) -> Path:
    name = cfg.label or datetime.now().strftime("%Y%m%dT%H%M%S_%f")
    return cfg.output_dir / cfg.command / name


def execute(config: RunConfig) -> RunReport:
    """Run the command, then write CSV tables and ``report.json``."""
    rep = RunReport(config)
    t0 = time.perf_counter()
    HANDLERS[config.command](config, rep)
    rep.wall_time = time.perf_counter() - t0
    run_dir = _run_dir(config)
    run_dir.mkdir(parents=True, exist_ok=True)
    for name, (header, rows) in rep.tables.items():
        rep.files.append(write_csv(run_dir / f"{name}.csv", header, rows))
    for fn in rep.writers:
        rep.files.extend(fn(run_dir))
    rep.run_dir = run_dir
    rep.files.append(run_dir / "report.json")
    write_json(run_dir / "report.json", rep.as_dict())
    return rep


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:        # --help / --version
        return int(exc.code or 0)
    try:
        rep = execute(cfg)
    except NumericalError as exc:
        print(f"{cfg.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (SolitonQMError, ValueError) as exc:
        print(f"{cfg.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for name, c in rep.checks.items():
        print(f"{'PASS' if c.passed else 'FAIL'} {name} value={c.value} limit={c.limit}")
    print(f"report: {rep.run_dir / 'report.json'}")
    return EXIT_PASS if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

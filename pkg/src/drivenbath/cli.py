"""
Command-line runner for the bundled experiments.

Configuration is an INI file (``[section]`` headers, ``key = value`` lines).
``--set section.key=value`` and the common flags override file values; the
resolved configuration is echoed into ``manifest.json`` together with the
package version, wall-clock duration and a SHA-256 checksum of every output.

Exit codes: 0 success, 1 usage or configuration error, 2 acceptance-check
failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .bath import (BathError, BathSpec, DebyeSpec, build_debye_bath, kernel_table, random_bath,
                   read_bath_csv, write_bath_csv)
from .circuit import (COPPER_CIRCUIT, CircuitParams, classical_nyquist_level, copper_estimate,
                      flat_resistance_equilibrium, noise_spectrum)
from .field import FieldProtocol
from .gle import Free, Harmonic, IntegrationError, ParticleParams, integrate_gle, integrate_microscopic
from .noise import (CONVENTIONS, REGIMES, ConfigurationError, EstimationError, analytic_eta_correlation,
                    analytic_sym_correlation, drive_shift, estimate_correlation, estimate_mean,
                    estimate_two_time, eta_ensemble, eta_path, sample_thermal_ensemble, xi_ensemble,
                    xi_path)
from .specfun import AMU, E_CHARGE, K_B, DomainError, ThermalContext

EXPERIMENTS = ("kernels", "fdr-check", "driven-fdr-check", "gle-run", "oracle-compare", "nyquist",
               "copper-estimate")
STOCHASTIC = {"fdr-check", "driven-fdr-check", "gle-run", "oracle-compare"}

EXIT_OK, EXIT_CONFIG, EXIT_CHECK, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


# --- schema --------------------------------------------------------------------

def _positive(v):
    return v > 0, "> 0"


def _nonneg(v):
    return v >= 0, ">= 0"


def _at_least(n):
    return lambda v: (v >= n, f">= {n}")


def _choice(options):
    return lambda v: (v in options, f"one of {', '.join(options)}")


def _any(v):
    return True, ""


def _float_list(text: str) -> Tuple[float, ...]:
    return tuple(float(s) for s in text.replace(",", " ").split())


def _list_positive(v):
    return len(v) > 0 and all(x > 0 for x in v), "a non-empty list of values > 0"


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    check: Callable[[Any], Tuple[bool, str]]
    default: Any = None


SCHEMA: Dict[str, Dict[str, Key]] = {
    "run": {"seed": Key(int, _nonneg), "threads": Key(int, _at_least(1), 1)},
    "bath": {
        "source": Key(str, _choice(("debye", "csv", "random")), "debye"),
        "path": Key(str, _any),
        "omega_D": Key(float, _positive, 1e13),
        "nu": Key(float, _positive, 1e13),
        "qbar": Key(float, _nonneg, E_CHARGE),
        "mbar": Key(float, _positive, 63.546 * AMU),
        "A_D": Key(float, _positive),
        "modes": Key(int, _at_least(1), 64),
        "omega_min": Key(float, _positive, 1.0),
        "omega_max": Key(float, _positive, 3.0),
        "coupling": Key(float, _positive, 0.3),
    },
    "thermal": {
        "temperature_K": Key(float, _nonneg, 300.0),
        "reduced_frequency": Key(float, _positive),
    },
    "field": {"E0": Key(float, _nonneg, 0.0), "Omega": Key(float, _positive, 3e12)},
    "grid": {"t_max": Key(float, _positive), "dt": Key(float, _positive), "n_times": Key(int, _at_least(2), 32)},
    "ensemble": {"size": Key(int, _at_least(2), 100000), "regime": Key(str, _choice(REGIMES), "classical")},
    "particle": {
        "mass": Key(float, _positive, 1.0),
        "charge": Key(float, _any, 1.0),
        "potential": Key(str, _choice(("free", "harmonic")), "harmonic"),
        "omega0": Key(float, _nonneg, 1.2),
    },
    "circuit": {
        "q": Key(float, _positive, COPPER_CIRCUIT.q),
        "n": Key(float, _positive, COPPER_CIRCUIT.n),
        "A": Key(float, _positive, COPPER_CIRCUIT.A),
        "m": Key(float, _positive, COPPER_CIRCUIT.m),
        "R": Key(float, _nonneg, 1.0),
        "delta_f": Key(float, _positive, 1e9),
        "tau_max": Key(float, _nonneg, 0.0),
        "n_tau": Key(int, _at_least(1), 1),
        "temperatures_K": Key(_float_list, _list_positive, (100.0, 300.0, 1000.0)),
    },
    "check": {
        "convention": Key(str, _choice(CONVENTIONS), "literal"),
        "n_sigma": Key(float, _positive, 4.0),
        "tolerance": Key(float, _positive, 1e-6),
        "rel_tol": Key(float, _positive, 1e-3),
    },
}

# experiment-specific defaults, applied before the file and the flags
KIND_DEFAULTS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "driven-fdr-check": {"field": {"E0": 5e8}, "grid": {"n_times": 8}},
    "gle-run": {"bath": {"source": "random", "modes": 16}, "ensemble": {"size": 2},
                "field": {"E0": 1e-10, "Omega": 2.0}},
    "oracle-compare": {"bath": {"source": "random", "modes": 16},
                       "field": {"E0": 1e-10, "Omega": 2.0}},
    "nyquist": {"bath": {"omega_D": 1e10}},
}


@dataclass
class ExperimentConfig:
    kind: str
    values: Dict[str, Dict[str, Any]]
    out: Path
    overridden: List[str] = field(default_factory=list)

    def get(self, section: str, key: str):
        return self.values[section].get(key)

    @property
    def seed(self) -> Optional[int]:
        return self.values["run"].get("seed")

    @property
    def threads(self) -> int:
        return self.values["run"]["threads"]

    def echo(self) -> Dict[str, Dict[str, Any]]:
        return {s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items() if v is not None}
                for s, kv in self.values.items()}


def _coerce(section: str, key: str, raw: Any):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section [{section}]")
    spec = SCHEMA[section].get(key)
    if spec is None:
        raise ConfigError(f"unknown key {section}.{key}")
    try:
        val = spec.parse(raw) if isinstance(raw, str) else raw
    except ValueError as exc:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} ({exc})") from None
    if isinstance(val, float) and not math.isfinite(val):
        raise ConfigError(f"{section}.{key} must be finite, got {raw!r}")
    ok, bound = spec.check(val)
    if not ok:
        raise ConfigError(f"{key} out of range: {section}.{key} = {raw!r}, must be {bound}")
    return val


def parse_config(kind: str, path: Optional[str] = None, overrides: Sequence[str] = (),
                 seed: Optional[int] = None, threads: Optional[int] = None,
                 out: Optional[str] = None) -> ExperimentConfig:
    """Resolve defaults, the config file and command-line overrides into a validated config.

    Raises
    ------
    ConfigError
        Unknown sections or keys (all listed), unparsable or out-of-range
        values (naming the key), or a missing seed for a stochastic experiment.
    """
    if kind not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {kind!r}; expected one of {', '.join(EXPERIMENTS)}")
    values = {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    for s, kv in KIND_DEFAULTS.get(kind, {}).items():
        values[s].update(kv)

    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, strict=True)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        unknown = [f"[{s}]" for s in cp.sections() if s not in SCHEMA]
        unknown += [f"{s}.{k}" for s in cp.sections() if s in SCHEMA for k in cp[s] if k not in SCHEMA[s]]
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        for s in cp.sections():
            for k, raw in cp[s].items():
                values[s][k] = _coerce(s, k, raw)

    overridden = []
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, raw = item.split("=", 1)
        s, k = lhs.strip().split(".", 1)
        values.setdefault(s, {})
        values[s][k] = _coerce(s, k, raw.strip())
        overridden.append(f"{s}.{k}")
    if seed is not None:
        values["run"]["seed"] = _coerce("run", "seed", seed)
        overridden.append("run.seed")
    if threads is not None:
        values["run"]["threads"] = _coerce("run", "threads", threads)
        overridden.append("run.threads")

    if kind in STOCHASTIC and values["run"]["seed"] is None:
        raise ConfigError(f"experiment {kind} is stochastic: a seed is required (--seed or [run] seed)")
    if values["bath"]["source"] == "csv" and not values["bath"]["path"]:
        raise ConfigError("bath.source = csv needs bath.path")
    if values["bath"]["omega_min"] >= values["bath"]["omega_max"]:
        raise ConfigError("bath.omega_min must be < bath.omega_max")
    return ExperimentConfig(kind, values, Path(out or f"out-{kind}"), overridden)


# --- builders ------------------------------------------------------------------

def _bath(cfg: ExperimentConfig) -> BathSpec:
    b = cfg.values["bath"]
    if b["source"] == "csv":
        return read_bath_csv(b["path"])
    if b["source"] == "random":
        seed = cfg.seed if cfg.seed is not None else 0
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xBA7]))
        m = cfg.values["particle"]["mass"]
        return random_bath(rng, b["modes"], (b["omega_min"], b["omega_max"]), coupling=b["coupling"],
                           particle_mass=m, charge_scale=cfg.values["particle"]["charge"] / m)
    spec = DebyeSpec(b["omega_D"], b["nu"], b["qbar"], b["mbar"], b["A_D"])
    return build_debye_bath(spec, b["modes"])


def _thermal(cfg: ExperimentConfig, bath: Optional[BathSpec] = None) -> ThermalContext:
    th = cfg.values["thermal"]
    if th["reduced_frequency"] is not None:
        if bath is None:
            raise ConfigError("thermal.reduced_frequency needs a bath")
        return ThermalContext.from_reduced_frequency(bath.omega_max, th["reduced_frequency"])
    return ThermalContext(th["temperature_K"])


def _field(cfg: ExperimentConfig) -> FieldProtocol:
    f = cfg.values["field"]
    return FieldProtocol(f["E0"], f["Omega"])


def _circuit(cfg: ExperimentConfig) -> CircuitParams:
    c = cfg.values["circuit"]
    return CircuitParams(c["q"], c["n"], c["A"], c["m"])


def _trajectory_grid(cfg: ExperimentConfig, bath: BathSpec) -> np.ndarray:
    g = cfg.values["grid"]
    dt = g["dt"] if g["dt"] is not None else 2.0 * math.pi / (100.0 * bath.omega_max)
    t_max = g["t_max"] if g["t_max"] is not None else 50.0 / bath.omega_min
    n = int(math.floor(t_max / dt + 1e-9))
    return dt * np.arange(n + 1)


def _kernel_times(cfg: ExperimentConfig, bath: BathSpec) -> np.ndarray:
    # default: n_times points over ten oscillations of the fastest mode
    g = cfg.values["grid"]
    t_max = g["t_max"] if g["t_max"] is not None else 10.0 * 2.0 * math.pi / bath.omega_max
    return np.linspace(0.0, t_max, g["n_times"])


def _write_rows(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(c)) if isinstance(c, (float, np.floating)) else c for c in row])


# --- experiments -----------------------------------------------------------------

@dataclass
class Outcome:
    files: List[Path] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    passed: Optional[bool] = None


def _run_kernels(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath = _bath(cfg)
    g = cfg.values["grid"]
    dt = g["dt"] if g["dt"] is not None else math.pi / (10.0 * bath.omega_max)
    t_max = g["t_max"] if g["t_max"] is not None else 10.0 * 2.0 * math.pi / bath.omega_min
    table = kernel_table(bath, t_max, dt)
    res.files.append(out / "bath_modes.csv")
    write_bath_csv(bath, res.files[-1])
    res.files.append(out / "kernels.csv")
    table.to_csv(res.files[-1])
    res.results.update(modes=len(bath), K0=float(table.K[0]), M0=float(table.M[0]))


def _run_fdr(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath = _bath(cfg)
    ctx = _thermal(cfg, bath)
    chk = cfg.values["check"]
    regime = cfg.values["ensemble"]["regime"]
    t = _kernel_times(cfg, bath)
    ens = sample_thermal_ensemble(bath, ctx, regime, cfg.values["ensemble"]["size"], cfg.seed, cfg.threads)
    paths = xi_ensemble(bath, ens, t, cfg.threads)
    est = estimate_correlation(paths, t, mode="ensemble", t_ref=0.0)
    analytic = np.asarray(analytic_sym_correlation(bath, ctx, t, 0.0, chk["convention"]))
    z = (est.mean - analytic) / est.stderr
    res.files.append(out / "correlation.csv")
    est.to_csv(res.files[-1])
    res.files.append(out / "fdr_residuals.csv")
    _write_rows(res.files[-1], ("lag_s", "estimate", "stderr", "analytic", "z"),
                zip(t, est.mean, est.stderr, analytic, z))
    res.passed = bool(np.max(np.abs(z)) <= chk["n_sigma"])
    res.results.update(regime=regime, temperature_K=ctx.temperature_K, convention=chk["convention"],
                       max_abs_z=float(np.max(np.abs(z))), n_sigma=chk["n_sigma"],
                       estimate_over_analytic_at_0=float(est.mean[0] / analytic[0]))


def _run_driven_fdr(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath = _bath(cfg)
    ctx = _thermal(cfg, bath)
    fld = _field(cfg)
    chk = cfg.values["check"]
    regime = cfg.values["ensemble"]["regime"]
    g = cfg.values["grid"]
    t_max = g["t_max"] if g["t_max"] is not None else 4.0 * 2.0 * math.pi / fld.Omega
    t = np.linspace(0.0, t_max, g["n_times"])
    ens = sample_thermal_ensemble(bath, ctx, regime, cfg.values["ensemble"]["size"], cfg.seed, cfg.threads)
    eta = eta_ensemble(xi_ensemble(bath, ens, t, cfg.threads), bath, fld)
    mean2, se2, count = estimate_two_time(eta, t, t)
    analytic = np.asarray(analytic_eta_correlation(bath, ctx, fld, t[:, None], t[None, :], chk["convention"]))
    z2 = (mean2 - analytic) / se2
    m1, se1 = estimate_mean(eta)
    D = np.asarray(drive_shift(bath, fld, t))
    z1 = np.where(se1 > 0, (m1 + D) / np.where(se1 > 0, se1, 1.0), 0.0)
    res.files.append(out / "eta_two_time.csv")
    _write_rows(res.files[-1], ("t_s", "t2_s", "estimate", "stderr", "analytic", "z"),
                ((t[i], t[j], mean2[i, j], se2[i, j], analytic[i, j], z2[i, j])
                 for i in range(t.size) for j in range(t.size)))
    res.files.append(out / "eta_mean.csv")
    _write_rows(res.files[-1], ("t_s", "mean", "stderr", "minus_drive_shift", "z"), zip(t, m1, se1, -D, z1))
    ok2 = bool(np.max(np.abs(z2)) <= chk["n_sigma"])
    ok1 = bool(np.max(np.abs(z1)) <= chk["n_sigma"])
    res.passed = ok1 and ok2
    res.results.update(convention=chk["convention"], count=count, max_abs_z_two_time=float(np.max(np.abs(z2))),
                       max_abs_z_mean=float(np.max(np.abs(z1))), n_sigma=chk["n_sigma"])


def _particle_setup(cfg: ExperimentConfig):
    bath = _bath(cfg)
    p = cfg.values["particle"]
    particle = ParticleParams(p["mass"], p["charge"])
    potential = Harmonic(p["omega0"]) if p["potential"] == "harmonic" else Free()
    regime = cfg.values["ensemble"]["regime"]
    ctx = _thermal(cfg, bath)
    init = sample_thermal_ensemble(bath, ctx, regime, 1, cfg.seed)[0]
    return bath, particle, potential, init, _field(cfg), _trajectory_grid(cfg, bath)


def _run_gle(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath, particle, potential, init, fld, t = _particle_setup(cfg)
    eta = eta_path(xi_path(bath, init, t), bath, fld)
    traj = integrate_gle(particle.renormalized(bath), potential, bath, eta, fld)
    res.files.append(out / "trajectory.csv")
    traj.to_csv(res.files[-1])
    res.results.update(steps=int(t.size - 1), dt=float(t[1] - t[0]))


def _run_oracle(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath, particle, potential, init, fld, t = _particle_setup(cfg)
    eta = eta_path(xi_path(bath, init, t), bath, fld)
    gle = integrate_gle(particle.renormalized(bath), potential, bath, eta, fld)
    micro = integrate_microscopic(particle, potential, bath, init, fld, t, substeps=4)
    dev = float(np.max(np.abs(gle.x - micro.x)) / np.max(np.abs(micro.x)))
    res.files.append(out / "gle_trajectory.csv")
    gle.to_csv(res.files[-1])
    res.files.append(out / "microscopic_trajectory.csv")
    micro.to_csv(res.files[-1])
    tol = cfg.values["check"]["tolerance"]
    res.passed = dev <= tol
    res.results.update(max_relative_deviation=dev, tolerance=tol, steps=int(t.size - 1))


def _run_nyquist(cfg: ExperimentConfig, out: Path, res: Outcome):
    bath = _bath(cfg)
    c = cfg.values["circuit"]
    R = c["R"]
    rows = []
    for T in c["temperatures_K"]:
        ctx = ThermalContext(T)
        classical = classical_nyquist_level(R, ctx)
        flat = float(flat_resistance_equilibrium(bath, R, ctx, 0.0))
        rows.append((T, classical, flat, flat / (R * K_B * T) if R else 0.0))
    res.files.append(out / "nyquist.csv")
    _write_rows(res.files[-1], ("temperature_K", "classical_V2_per_Hz", "flat_R_equilibrium_V2_per_Hz",
                                "slope_over_R_kB_T"), rows)
    ctx = _thermal(cfg, bath)
    taus = np.linspace(0.0, c["tau_max"], c["n_tau"])
    spec = noise_spectrum(bath, ctx, _circuit(cfg), _field(cfg), c["delta_f"], taus)
    res.files.append(out / "spectrum.csv")
    spec.to_csv(res.files[-1])
    slopes = np.array([r[3] for r in rows])
    tol = cfg.values["check"]["rel_tol"]
    res.passed = bool(R == 0 or np.max(np.abs(slopes / 4.0 - 1.0)) <= tol)
    res.results.update(slopes=[float(s) for s in slopes], rel_tol=tol)


def _run_copper(cfg: ExperimentConfig, out: Path, res: Outcome):
    rep = copper_estimate()
    d = rep.as_dict()
    res.files.append(out / "copper.csv")
    _write_rows(res.files[-1], ("quantity", "value"), ((k, float(v)) for k, v in d.items()))
    res.results.update({k: float(v) for k, v in d.items()})
    factor_ok = 0.1 <= rep.quadrature_over_closed <= 10.0
    order_ok = 1e-3 <= rep.ratio_averaged_vs_reference <= 1e3
    res.passed = bool(factor_ok and order_ok)


RUNNERS = {
    "kernels": _run_kernels,
    "fdr-check": _run_fdr,
    "driven-fdr-check": _run_driven_fdr,
    "gle-run": _run_gle,
    "oracle-compare": _run_oracle,
    "nyquist": _run_nyquist,
    "copper-estimate": _run_copper,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig) -> Tuple[int, Dict[str, Any]]:
    """Run ``cfg`` into ``cfg.out``; return ``(exit_code, manifest)``.

    Output files from a run that raises are deleted before the error
    propagates; the manifest is written once, after all outputs.
    """
    out = cfg.out
    created = not out.exists()
    out.mkdir(parents=True, exist_ok=True)
    res = Outcome()
    start = time.perf_counter()
    try:
        RUNNERS[cfg.kind](cfg, out, res)
    except BaseException:
        for f in res.files:
            f.unlink(missing_ok=True)
        if created and not any(out.iterdir()):
            out.rmdir()
        raise
    status = "ok" if res.passed is None else ("pass" if res.passed else "fail")
    manifest = {
        "experiment": cfg.kind,
        "version": __version__,
        "config": cfg.echo(),
        "overrides": cfg.overridden,
        "duration_s": time.perf_counter() - start,
        "outputs": {f.name: _sha256(f) for f in res.files},
        "results": res.results,
        "status": status,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (EXIT_CHECK if res.passed is False else EXIT_OK), manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drivenbath", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for kind in EXPERIMENTS:
        p = sub.add_parser(kind)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="master seed (u64)")
        p.add_argument("--out", help="output directory (default out-<experiment>)")
        p.add_argument("--threads", type=int, help="worker threads for ensemble generation")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one configuration value; repeatable")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = parse_config(args.experiment, args.config, args.set, args.seed, args.threads, args.out)
    except (ConfigError, ValueError) as exc:
        print(f"drivenbath {args.experiment}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, manifest = run_experiment(cfg)
    except (IntegrationError, EstimationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"drivenbath {cfg.kind}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ConfigurationError, BathError, DomainError, ValueError, OSError) as exc:
        print(f"drivenbath {cfg.kind}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg.kind}: {manifest['status']} -> {cfg.out}")
    for k, v in manifest["results"].items():
        print(f"  {k} = {v}")
    return code


if __name__ == "__main__":
    sys.exit(main())

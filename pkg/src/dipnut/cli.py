"""``dipnut`` command-line front-end.

Every subcommand writes one CSV table (UTF-8, LF line endings, 12
significant digits) preceded by ``#`` metadata lines: tool version, command,
SHA-256 of the effective configuration, the constants table, and the
effective configuration itself as ``# config:`` lines that reparse to the same
configuration. Output carries no timestamps, so identical inputs give
byte-identical files.

Exit codes: 0 success, 2 configuration error, 3 physical-validity rejection.
"""

import argparse
import csv
import dataclasses
import io
import math
import sys
import warnings
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from . import __version__
from .config import HEADER_PREFIX, ConfigError, ExperimentConfig, load_config
from .constants import CONSTANTS, PhysicalValidityError
from .dynamics import (
    DriveParams,
    InitialState,
    SpinSystem,
    StateVariant,
    coherence_time,
    coherence_time_small_detuning,
    k0en,
    nuclear_zeeman_correction,
    nutation_time_grid,
    omega_r_eff,
    pi_factor,
    pi_factor_mc,
    rotate_sy_coefficient,
    signals,
    time_from_reduced,
)
from .lattice import generate_cluster
from .linewidth import Regime, half_width, line_half_width, moment_report, to_tesla

EXIT_CONFIG = 2
EXIT_PHYSICAL = 3
DEFAULT_PERIODS = 10.0


# --------------------------------------------------------------------------
# config -> physics objects


@lru_cache(maxsize=8)
def _cluster(cm: int):
    return generate_cluster(cm)


def build_system(cfg: ExperimentConfig) -> SpinSystem:
    s = cfg.system
    return SpinSystem(g_e=s.g_e, g_n=s.g_n, nuclear_I=s.nuclear_spin, a=s.a_meters, f=s.f)


def _detuning_for_omega_r_eff(system, B0, B1, target):
    """Δ > 0 on the small-detuning branch (Δ/ω₁ <= √2) with the given Ω_R,eff."""
    base = DriveParams(B0=B0, B1=B1, g_e=system.g_e, g_n=system.g_n)
    w1 = base.omega1
    scale = CONSTANTS.hbar * w1 / k0en(system)
    lowest = scale * 3**1.5 / 2  # minimum of (1+x²)^{3/2}/x² at x = √2
    if target < lowest:
        raise PhysicalValidityError(
            f"omega_r_eff = {target} is below the minimum {lowest:.6g} reachable with "
            f"B1 = {B1} T; lower B1")
    if math.isclose(target, lowest, rel_tol=1e-12):
        return math.sqrt(2) * w1

    def g(x):
        return scale * (1 + x * x) ** 1.5 / (x * x) - target

    hi = math.sqrt(2)
    lo = hi
    while g(lo) < 0:
        lo /= 2
    return brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps) * w1


def resolve_delta(cfg: ExperimentConfig, system: SpinSystem) -> float:
    d = cfg.drive
    if d.delta_rad_per_s is not None:
        return d.delta_rad_per_s
    if d.delta_over_delta_hw is not None:
        return d.delta_over_delta_hw * line_half_width(system, _cluster(cfg.lattice.moments_cm))
    if d.omega_r_eff is not None:
        return _detuning_for_omega_r_eff(system, d.B0_tesla, d.B1_tesla, d.omega_r_eff)
    return 0.0


def build_drive(cfg: ExperimentConfig, system: SpinSystem) -> DriveParams:
    return DriveParams(B0=cfg.drive.B0_tesla, B1=cfg.drive.B1_tesla,
                       delta=resolve_delta(cfg, system), g_e=system.g_e, g_n=system.g_n)


def _time_grid(cfg, system, drive):
    run = cfg.run
    if run.periods is not None or drive.cos_theta == 0:
        periods = run.periods if run.periods is not None else DEFAULT_PERIODS
        return nutation_time_grid(drive, periods=periods, samples_per_period=run.samples_per_period)
    t_max = time_from_reduced(run.tau_eff_max_over_pi * math.pi, system, drive)
    return nutation_time_grid(drive, t_max=t_max, samples_per_period=run.samples_per_period)


def oracle_sites(cluster, n: int) -> np.ndarray:
    """The ``n`` sites closest to the centre, ties kept in lexicographic order."""
    if n > cluster.n_sites:
        raise ConfigError(f"[oracle] n_nuclei = {n} exceeds the {cluster.n_sites} sites at cm = {cluster.cm}")
    r2 = np.einsum("ij,ij->i", cluster.sites, cluster.sites)
    return np.argsort(r2, kind="stable")[:n]


# --------------------------------------------------------------------------
# subcommands; each returns (extra metadata, column names, rows)


def cmd_sums(cfg):
    rows = []
    for cm in cfg.lattice.cm_list:
        c = _cluster(cm)
        rows.append([cm, c.n_sites, c.s2, c.s4, c.s_cross])
    return {}, ["cm", "n_sites", "s2", "s4", "s_cross"], rows


def cmd_pi(cfg):
    run = cfg.run
    system = build_system(cfg)
    cluster = _cluster(cfg.lattice.cm)
    x = np.linspace(0.0, run.tau_eff_max_over_pi, run.n_points)
    tau = x * math.pi
    pi = pi_factor(cluster, tau, f_scale=system.f)
    columns = ["tau_eff_over_pi", "pi"]
    cols = [x, pi]
    if run.mc_realizations > 0:
        mean, err = pi_factor_mc(cluster, system.f, tau, run.mc_realizations, run.seed,
                                 threads=run.threads)
        columns += ["pi_mc_mean", "pi_mc_stderr"]
        cols += [mean, err]
    meta = {"cm": cluster.cm, "n_sites": cluster.n_sites}
    return meta, columns, [list(r) for r in zip(*cols)]


def cmd_signals(cfg):
    system = build_system(cfg)
    drive = build_drive(cfg, system)
    state = InitialState(StateVariant(cfg.state.variant), cfg.state.temperature_kelvin)
    t = _time_grid(cfg, system, drive)
    sig = signals(state, system, drive, _cluster(cfg.lattice.cm), t)
    ratio = sig.sx / sig.sx[0]
    meta = {
        "omega_r_eff": omega_r_eff(system, drive),
        "delta_rad_per_s": drive.delta,
        "omega_r_rad_per_s": drive.omega_r,
        "amplitude_A": sig.amplitude_A,
    }
    columns = ["t_seconds", "tau_eff", "pi", "sx_over_sx0", "sx", "sy", "sz"]
    rows = [list(r) for r in zip(sig.t, sig.tau_eff, sig.pi, ratio, sig.sx, sig.sy, sig.sz)]
    return meta, columns, rows


_MOMENT_COLUMNS = ["m2", "m4", "m2_reduced", "m4_reduced", "ratio", "regime", "delta_rad_per_s",
                   "delta_b_tesla", "tdc_at_delta_seconds", "delta_gaussian", "delta_lorentzian"]


def _moment_row(report):
    return [report.m2, report.m4, report.m2_reduced, report.m4_reduced, report.ratio,
            report.regime.value, report.delta, report.delta_b, report.tdc_at_delta,
            report.delta_gaussian, report.delta_lorentzian]


def cmd_moments(cfg):
    system = build_system(cfg)
    cluster = _cluster(cfg.lattice.moments_cm)
    report = moment_report(cluster, system, cfg.drive.B1_tesla)
    if cfg.run.regime != "auto":
        # forced branch; the cut-off Lorentzian raises at f = 1
        regime = Regime(cfg.run.regime)
        delta = half_width(report.m2, report.m4, regime, system.f)
        drive = DriveParams(B0=0.0, B1=cfg.drive.B1_tesla, delta=delta, g_e=system.g_e,
                            g_n=system.g_n)
        report = dataclasses.replace(report, regime=regime, delta=delta,
                                     delta_b=to_tesla(delta, system),
                                     tdc_at_delta=coherence_time(system, drive))
    meta = {"moments_cm": cluster.cm, "k0en_joule": k0en(system)}
    return meta, ["cm", "f", "nuclear_spin"] + _MOMENT_COLUMNS, [
        [cluster.cm, system.f, system.nuclear_I] + _moment_row(report)]


def cmd_tdc(cfg):
    system = build_system(cfg)
    base = build_drive(cfg, system)
    delta_hw = line_half_width(system, _cluster(cfg.lattice.moments_cm))
    x = np.linspace(-cfg.run.delta_span_over_delta_hw, cfg.run.delta_span_over_delta_hw,
                    cfg.run.n_delta)
    rows = []
    for xi in x:
        drive = base.with_delta(float(xi) * delta_hw)
        small, valid = coherence_time_small_detuning(system, drive)
        rows.append([drive.delta, xi, coherence_time(system, drive), small, int(valid)])
    meta = {"delta_hw_rad_per_s": delta_hw}
    columns = ["delta_rad_per_s", "delta_over_delta_hw", "t_dc_seconds",
               "t_dc_small_detuning_seconds", "small_detuning_valid"]
    return meta, columns, rows


def cmd_oracle(cfg):
    from .oracle import build_operators, evolve_and_reduce, initial_density, max_signal_deviation

    system = build_system(cfg)
    drive = build_drive(cfg, system)
    cluster = _cluster(cfg.lattice.cm)
    k = cluster.k_values[oracle_sites(cluster, cfg.oracle.n_nuclei)]
    if drive.cos_theta == 0:
        periods = cfg.run.periods if cfg.run.periods is not None else DEFAULT_PERIODS
        t_max = periods * 2 * math.pi / drive.omega_r
    else:
        t_max = time_from_reduced(cfg.run.tau_eff_max_over_pi * math.pi, system, drive)
    t = np.linspace(0.0, t_max, cfg.oracle.n_points)
    try:
        ops = build_operators(k, system, drive)
    except MemoryError as exc:
        raise ConfigError(str(exc)) from None
    rows = []
    for variant in StateVariant:
        state = InitialState(variant, cfg.state.temperature_kelvin)
        exact = evolve_and_reduce(ops, initial_density(ops, state), cfg.oracle.hamiltonian, t)
        analytic = signals(state, system, drive, k, t)
        abs_dev, rel_dev = max_signal_deviation(analytic, exact)
        corrected = analytic
        if variant is StateVariant.ELECTRON_DOWN:
            coef = nuclear_zeeman_correction(drive, k, state.temperature, analytic.tau_eff)
            dx, dy = rotate_sy_coefficient(coef, drive.omega_r, t)
            corrected = dataclasses.replace(analytic, sx=analytic.sx + dx, sy=analytic.sy + dy)
        _, rel_corr = max_signal_deviation(corrected, exact)
        rows.append([variant.value, cfg.oracle.hamiltonian, ops.n_nuclei, ops.dim,
                     abs_dev, rel_dev, rel_corr])
    columns = ["state", "hamiltonian", "n_nuclei", "dim", "max_abs_deviation",
               "max_rel_deviation", "max_rel_deviation_corrected"]
    return {"delta_rad_per_s": drive.delta}, columns, rows


def cmd_sweep(cfg):
    sw = cfg.sweep
    if sw.axis is None:
        raise ConfigError("[sweep] axis is required for the sweep command")
    rows = []
    for value in sw.values:
        if sw.axis == "f":
            c = cfg.with_overrides(system={"f": float(value)})
        elif sw.axis == "B1":
            c = cfg.with_overrides(drive={"B1_tesla": float(value)})
        elif sw.axis == "delta":
            c = cfg.with_overrides(drive={"delta_rad_per_s": float(value)})
        else:
            c = cfg.with_overrides(lattice={"moments_cm": int(value)})
        system = build_system(c)
        cluster = _cluster(c.lattice.moments_cm)
        report = moment_report(cluster, system, c.drive.B1_tesla)
        drive = build_drive(c, system)
        rows.append([value, cluster.cm, cluster.s2, cluster.s4, cluster.s_cross]
                    + _moment_row(report) + [drive.delta, coherence_time(system, drive)])
    columns = (["value", "moments_cm", "s2", "s4", "s_cross"] + _MOMENT_COLUMNS
               + ["detuning_rad_per_s", "t_dc_seconds"])
    return {"axis": sw.axis}, columns, rows


COMMANDS = {
    "sums": cmd_sums,
    "pi": cmd_pi,
    "signals": cmd_signals,
    "moments": cmd_moments,
    "tdc": cmd_tdc,
    "oracle": cmd_oracle,
    "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# output


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if value == 0:
            return "0"  # folds -0.0
        return f"{value:.12g}"
    return str(value)


def render_csv(command: str, cfg: ExperimentConfig, meta: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# tool: dipnut {__version__}\n")
    buf.write(f"# command: {command}\n")
    buf.write(f"# config_sha256: {cfg.sha256()}\n")
    for name, value in CONSTANTS.as_dict().items():
        buf.write(f"# constant: {name} = {value!r}\n")
    for name, value in meta.items():
        buf.write(f"# {name}: {format_value(value)}\n")
    for line in cfg.to_ini().splitlines():
        if line:
            buf.write(f"{HEADER_PREFIX}{line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dipnut", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"dipnut {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file (defaults apply when omitted)")
        p.add_argument("--out", help="output CSV path (default: [run] output, else stdout)")
        p.add_argument("--seed", type=int, help="overrides [run] seed")
        p.add_argument("--threads", type=int, help="overrides [run] threads")
        p.add_argument("--cm", type=int, help="overrides [lattice] cm")
        p.add_argument("--mc", type=int, help="overrides [run] mc_realizations")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        code, text, cfg = _execute(args)
    seen = set()
    for w in caught:
        msg = str(w.message)
        if msg not in seen:
            seen.add(msg)
            print(f"dipnut: warning: {msg}", file=sys.stderr)
    if code:
        return code

    out = args.out or cfg.run.output
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _execute(args):
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        cfg = cfg.with_overrides(
            run={"seed": args.seed, "threads": args.threads, "mc_realizations": args.mc},
            lattice={"cm": args.cm})
        meta, columns, rows = COMMANDS[args.command](cfg)
        text = render_csv(args.command, cfg, meta, columns, rows)
    except ConfigError as exc:
        print(f"dipnut: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, None
    except PhysicalValidityError as exc:
        print(f"dipnut: rejected: {exc}", file=sys.stderr)
        return EXIT_PHYSICAL, None, None
    except ValueError as exc:
        # invalid physical parameters surfacing from the library
        print(f"dipnut: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None, None
    return 0, text, cfg


def main():
    sys.exit(run())

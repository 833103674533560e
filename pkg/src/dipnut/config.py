"""Experiment configuration files.

The format is INI as read by :mod:`configparser` with interpolation off.
Section and key names are case-sensitive; unknown sections or keys, duplicate
keys and unparsable values are errors. Every key is optional and falls back
to the default listed in ``SCHEMA``.

::

    [system]
    g_e = 2.0
    g_n = 5.586            # proton
    nuclear_spin = 0.5
    a_meters = 3e-10
    f = 1.0

    [drive]
    B0_tesla = 0.357
    B1_tesla = 0.001
    # at most one detuning key
    delta_over_delta_hw = 1.0

Detuning: ``delta_rad_per_s`` sets Δ directly, ``delta_over_delta_hw`` in
units of the line half-width, ``omega_r_eff`` picks the small-detuning Δ with
that reduced Rabi frequency. Without any of them Δ = 0.

Lists (``cm_list``, ``values``) are comma separated.
"""

import configparser
import hashlib
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from .dynamics import StateVariant

HEADER_PREFIX = "# config: "


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


SWEEP_AXES = ("f", "B1", "delta", "cm")
HAMILTONIANS = ("H_P_prime", "H_1_prime")
REGIME_CHOICES = ("auto", "Gaussian", "CutoffLorentzian")


@dataclass(frozen=True)
class SystemBlock:
    g_e: float = 2.0
    g_n: float = 5.586
    nuclear_spin: float = 0.5
    a_meters: float = 3e-10
    f: float = 1.0


@dataclass(frozen=True)
class DriveBlock:
    B0_tesla: float = 0.357
    B1_tesla: float = 1e-3
    delta_rad_per_s: Optional[float] = None
    delta_over_delta_hw: Optional[float] = None
    omega_r_eff: Optional[float] = None


@dataclass(frozen=True)
class LatticeBlock:
    cm: int = 1
    moments_cm: int = 50
    cm_list: Tuple[int, ...] = (1, 2, 3, 5, 10, 20, 50)


@dataclass(frozen=True)
class StateBlock:
    variant: str = StateVariant.THERMAL_BOTH.value
    temperature_kelvin: float = 4.2


@dataclass(frozen=True)
class RunBlock:
    tau_eff_max_over_pi: float = 3.0
    n_points: int = 601
    samples_per_period: int = 40
    periods: Optional[float] = None
    mc_realizations: int = 0
    seed: int = 0
    threads: int = 1
    n_delta: int = 41
    delta_span_over_delta_hw: float = 2.0
    regime: str = "auto"
    output: Optional[str] = None


@dataclass(frozen=True)
class SweepBlock:
    axis: Optional[str] = None
    values: Tuple[float, ...] = ()


@dataclass(frozen=True)
class OracleBlock:
    n_nuclei: int = 8
    hamiltonian: str = "H_P_prime"
    n_points: int = 201


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemBlock = SystemBlock()
    drive: DriveBlock = DriveBlock()
    lattice: LatticeBlock = LatticeBlock()
    state: StateBlock = StateBlock()
    run: RunBlock = RunBlock()
    sweep: SweepBlock = SweepBlock()
    oracle: OracleBlock = OracleBlock()

    def to_ini(self) -> str:
        """Canonical text of the effective configuration (all keys, repr floats)."""
        lines = []
        for sec in fields(self):
            block = getattr(self, sec.name)
            lines.append(f"[{sec.name}]")
            for fld in fields(block):
                value = getattr(block, fld.name)
                if value is None:
                    continue
                lines.append(f"{fld.name} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)

    def sha256(self) -> str:
        return hashlib.sha256(self.to_ini().encode("utf-8")).hexdigest()

    def with_overrides(self, **sections) -> "ExperimentConfig":
        """``with_overrides(run={"seed": 3})`` -> validated copy."""
        new = self
        for name, values in sections.items():
            values = {k: v for k, v in values.items() if v is not None}
            if values:
                new = replace(new, **{name: replace(getattr(new, name), **values)})
        validate(new)
        return new


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_scalar(kind, raw, where):
    try:
        if kind is float:
            return float(raw)
        if kind is int:
            return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def _parse_value(annotation, raw, where):
    raw = raw.strip()
    if annotation in (float, int, str):
        return _parse_scalar(annotation, raw, where)
    if annotation in (Optional[float], Optional[str]):
        inner = float if annotation is Optional[float] else str
        return _parse_scalar(inner, raw, where)
    if annotation in (Tuple[int, ...], Tuple[float, ...]):
        inner = int if annotation is Tuple[int, ...] else float
        items = [s for s in (p.strip() for p in raw.split(",")) if s]
        return tuple(_parse_scalar(inner, s, where) for s in items)
    raise TypeError(annotation)


def parse_config_text(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    known = {f.name: f.type for f in fields(ExperimentConfig)}
    unknown = set(parser.sections()) - set(known)
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    blocks = {}
    for sec_name, block_type in known.items():
        block_fields = {f.name: f.type for f in fields(block_type)}
        values = {}
        if parser.has_section(sec_name):
            for key, raw in parser.items(sec_name):
                if key not in block_fields:
                    raise ConfigError(f"unknown key [{sec_name}] {key}")
                values[key] = _parse_value(block_fields[key], raw, f"[{sec_name}] {key}")
        blocks[sec_name] = block_type(**values)
    cfg = ExperimentConfig(**blocks)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text)


def config_from_header(csv_text: str) -> ExperimentConfig:
    """Rebuild the effective config from the ``# config:`` lines of a CSV file."""
    lines = [ln[len(HEADER_PREFIX):] for ln in csv_text.splitlines()
             if ln.startswith(HEADER_PREFIX)]
    return parse_config_text("\n".join(lines))


def _positive(value, name):
    if not value > 0:
        raise ConfigError(f"{name} must be positive, got {value}")


def validate(cfg: ExperimentConfig) -> None:
    s, d, lat, st, run, sw, orc = (cfg.system, cfg.drive, cfg.lattice, cfg.state,
                                   cfg.run, cfg.sweep, cfg.oracle)
    for name in ("g_e", "g_n", "a_meters"):
        _positive(getattr(s, name), f"[system] {name}")
    if not 0 < s.f <= 1:
        raise ConfigError(f"[system] f must lie in (0, 1], got {s.f}")
    two_i = 2 * s.nuclear_spin
    if two_i < 1 or two_i != int(two_i):
        raise ConfigError(f"[system] nuclear_spin must be a positive half-integer, got {s.nuclear_spin}")

    if d.B0_tesla < 0:
        raise ConfigError("[drive] B0_tesla must be non-negative")
    _positive(d.B1_tesla, "[drive] B1_tesla")
    given = [k for k in ("delta_rad_per_s", "delta_over_delta_hw", "omega_r_eff")
             if getattr(d, k) is not None]
    if len(given) > 1:
        raise ConfigError(f"[drive] conflicting detuning keys: {', '.join(given)}")
    if d.omega_r_eff is not None:
        _positive(d.omega_r_eff, "[drive] omega_r_eff")

    for name in ("cm", "moments_cm"):
        if getattr(lat, name) < 1:
            raise ConfigError(f"[lattice] {name} must be >= 1")
    if not lat.cm_list or min(lat.cm_list) < 1:
        raise ConfigError("[lattice] cm_list must list positive integers")

    try:
        StateVariant(st.variant)
    except ValueError:
        choices = ", ".join(v.value for v in StateVariant)
        raise ConfigError(f"[state] variant must be one of {choices}") from None
    _positive(st.temperature_kelvin, "[state] temperature_kelvin")

    _positive(run.tau_eff_max_over_pi, "[run] tau_eff_max_over_pi")
    if run.n_points < 2 or run.n_delta < 2:
        raise ConfigError("[run] n_points and n_delta must be >= 2")
    if run.samples_per_period < 40 or run.samples_per_period % 2:
        raise ConfigError("[run] samples_per_period must be an even number >= 40")
    if run.periods is not None:
        _positive(run.periods, "[run] periods")
    if run.mc_realizations < 0 or run.seed < 0 or run.threads < 1:
        raise ConfigError("[run] mc_realizations and seed must be >= 0, threads >= 1")
    _positive(run.delta_span_over_delta_hw, "[run] delta_span_over_delta_hw")
    if run.regime not in REGIME_CHOICES:
        raise ConfigError(f"[run] regime must be one of {', '.join(REGIME_CHOICES)}")

    if sw.axis is not None:
        if sw.axis not in SWEEP_AXES:
            raise ConfigError(f"[sweep] axis must be one of {', '.join(SWEEP_AXES)}")
        if not sw.values:
            raise ConfigError("[sweep] values must not be empty")
        if sw.axis == "delta" and given:
            raise ConfigError(f"[sweep] axis delta conflicts with [drive] {given[0]}")
        if sw.axis == "cm" and any(v < 1 or v != int(v) for v in sw.values):
            raise ConfigError("[sweep] cm values must be positive integers")
        if sw.axis == "f" and any(not 0 < v <= 1 for v in sw.values):
            raise ConfigError("[sweep] f values must lie in (0, 1]")
        if sw.axis == "B1" and any(v <= 0 for v in sw.values):
            raise ConfigError("[sweep] B1 values must be positive")

    if orc.n_nuclei < 1:
        raise ConfigError("[oracle] n_nuclei must be >= 1")
    if orc.hamiltonian not in HAMILTONIANS:
        raise ConfigError(f"[oracle] hamiltonian must be one of {', '.join(HAMILTONIANS)}")
    if orc.n_points < 2:
        raise ConfigError("[oracle] n_points must be >= 2")

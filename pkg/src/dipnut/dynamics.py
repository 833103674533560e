"""Nutation decay of the central electron spin.

In the doubly rotated frame (rotating at the drive frequency, then tilted by
the effective-field angle theta) the truncated Hamiltonian is diagonal and
the central-spin transverse components oscillate at the Rabi frequency with
the envelope

    Pi(tau_eff) = prod_j cos(tau_eff * k_j / 2),
    tau_eff     = cos(theta)^2 * K0en * t / hbar.

Time is reduced by t_ref = hbar / K0en, where K0en is the dipolar energy at
one lattice constant. Dilution enters either through the mean-field
replacement tau_eff -> f * tau_eff or through an explicit disorder average
(:func:`pi_factor_mc`).
"""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .constants import CONSTANTS, ValidityWarning
from .lattice import LatticeCluster, check_fraction, occupation_rng

#: ħω₀/kT above which the linearised Boltzmann state is flagged.
HTA_THRESHOLD = 0.2
#: K0en/ħω₁ above which the weak-coupling truncation is flagged.
REDFIELD_THRESHOLD = 0.1
#: |Δ|/ω₁ above which the small-detuning form of t_DC is flagged.
SMALL_DETUNING_THRESHOLD = 0.1


@dataclass(frozen=True)
class SpinSystem:
    """Central electron spin and its lattice of identical nuclear spins.

    ``a`` is the lattice constant in metres and ``f`` the probability that a
    lattice site carries a nuclear spin.
    """

    g_e: float = 2.0
    g_n: float = 5.586
    nuclear_I: float = 0.5
    a: float = 3e-10
    f: float = 1.0

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("lattice constant must be positive")
        two_i = 2 * self.nuclear_I
        if two_i < 1 or abs(two_i - round(two_i)) > 1e-12:
            raise ValueError(f"nuclear spin must be a positive half-integer, got {self.nuclear_I}")
        check_fraction(self.f)

    def require_spin_half(self):
        if self.nuclear_I != 0.5:
            raise ValueError("nutation dynamics are only defined for spin-1/2 nuclei")


@dataclass(frozen=True)
class DriveParams:
    """Static field, rotating drive amplitude and detuning Δ = ω₀ − ω (rad/s).

    The tilt angle is ``theta = atan2(ω₁, Δ)`` so that sinθ > 0 for either
    sign of the detuning. ``delta_n`` defaults to −ω₀ₙ − ω.
    """

    B0: float
    B1: float
    delta: float = 0.0
    g_e: float = 2.0
    g_n: float = 5.586
    delta_n_override: Optional[float] = None
    constants: object = field(default=CONSTANTS, repr=False, compare=False)

    def __post_init__(self):
        if self.B1 <= 0:
            raise ValueError("B1 must be positive")

    @classmethod
    def for_system(cls, system: SpinSystem, B0: float, B1: float, delta: float = 0.0, **kw):
        return cls(B0=B0, B1=B1, delta=delta, g_e=system.g_e, g_n=system.g_n, **kw)

    @property
    def omega0(self) -> float:
        c = self.constants
        return self.g_e * c.mu_B * self.B0 / c.hbar

    @property
    def omega0n(self) -> float:
        c = self.constants
        return self.g_n * c.mu_N * self.B0 / c.hbar

    @property
    def omega1(self) -> float:
        c = self.constants
        return self.g_e * c.mu_B * self.B1 / c.hbar

    @property
    def omega(self) -> float:
        """Drive frequency."""
        return self.omega0 - self.delta

    @property
    def omega_r(self) -> float:
        return math.hypot(self.omega1, self.delta)

    @property
    def cos_theta(self) -> float:
        return self.delta / self.omega_r

    @property
    def sin_theta(self) -> float:
        return self.omega1 / self.omega_r

    @property
    def theta(self) -> float:
        return math.atan2(self.omega1, self.delta)

    @property
    def delta_n(self) -> float:
        if self.delta_n_override is not None:
            return self.delta_n_override
        return -self.omega0n - self.omega

    def with_delta(self, delta: float) -> "DriveParams":
        return DriveParams(self.B0, self.B1, delta, self.g_e, self.g_n,
                           self.delta_n_override, self.constants)


class StateVariant(str, Enum):
    THERMAL_BOTH = "thermal_both"
    ELECTRON_DOWN = "electron_down_nuclear_thermal"


@dataclass(frozen=True)
class InitialState:
    variant: StateVariant = StateVariant.THERMAL_BOTH
    temperature: float = 4.2

    def __post_init__(self):
        object.__setattr__(self, "variant", StateVariant(self.variant))
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")

    def zeeman_ratio(self, drive: DriveParams) -> float:
        """ħω₀ / kT."""
        c = drive.constants
        return c.hbar * drive.omega0 / (c.k_B * self.temperature)

    def hta_valid(self, drive: DriveParams) -> bool:
        return self.zeeman_ratio(drive) <= HTA_THRESHOLD


@dataclass
class NutationSignal:
    """Central-spin expectation values on a time grid (sample-tied frame)."""

    t: np.ndarray
    tau_eff: np.ndarray
    pi: np.ndarray
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    amplitude_A: float
    omega_r: float = float("nan")
    sin_theta: float = float("nan")

    @property
    def sx_over_sx0(self) -> np.ndarray:
        return self.pi * np.cos(self.omega_r * self.t)

    @property
    def transverse(self) -> np.ndarray:
        return np.hypot(self.sx, self.sy)


# --------------------------------------------------------------------------
# scales


def k0en(system: SpinSystem, constants=CONSTANTS) -> float:
    """Dipolar energy scale (μ₀/4π) g_e g_n μ_B μ_N / a³ in joules."""
    c = constants
    return c.mu0_over_4pi * system.g_e * system.g_n * c.mu_B * c.mu_N / system.a**3


def reference_time(system: SpinSystem, constants=CONSTANTS) -> float:
    return constants.hbar / k0en(system, constants)


def reduced_time(t, system: SpinSystem, drive: DriveParams):
    """Return ``(tau, tau_eff)`` for time(s) ``t`` in seconds."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    tau = t / reference_time(system, drive.constants)
    tau_eff = tau * drive.cos_theta**2
    if tau.ndim == 0:
        return float(tau), float(tau_eff)
    return tau, tau_eff


def time_from_reduced(tau_eff, system: SpinSystem, drive: DriveParams):
    """Inverse of :func:`reduced_time`; infinite when cosθ = 0 and tau_eff > 0."""
    tau_eff = np.asarray(tau_eff, dtype=float)
    c2 = drive.cos_theta**2
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(tau_eff == 0, 0.0, tau_eff / c2) * reference_time(system, drive.constants)
    return float(t) if t.ndim == 0 else t


def omega_r_eff(system: SpinSystem, drive: DriveParams) -> float:
    """Rabi frequency in units of cos²θ K0en/ħ (infinite at resonance)."""
    c2 = drive.cos_theta**2
    if c2 == 0:
        return math.inf
    return drive.constants.hbar * drive.omega_r / (c2 * k0en(system, drive.constants))


def nutation_time_grid(drive: DriveParams, t_max: float = None, periods: float = None,
                       samples_per_period: int = 40) -> np.ndarray:
    """Uniform grid starting at 0 with an even number of samples per Rabi period.

    Half-period multiples fall exactly on grid points, so the oscillation
    extrema are sampled. Give either ``t_max`` (seconds) or ``periods``.
    """
    if samples_per_period < 40 or samples_per_period % 2:
        raise ValueError("samples_per_period must be an even number >= 40")
    period = 2 * math.pi / drive.omega_r
    if (t_max is None) == (periods is None):
        raise ValueError("give exactly one of t_max or periods")
    if periods is None:
        periods = t_max / period
    n = int(math.ceil(periods * samples_per_period - 1e-9))
    return np.arange(n + 1) * (period / samples_per_period)


# --------------------------------------------------------------------------
# decay product


def _k_array(source) -> np.ndarray:
    if isinstance(source, LatticeCluster):
        return source.k_values
    return np.asarray(source, dtype=float).ravel()


def _cos_table(k, tau_eff, scale=1.0):
    """cos(scale * tau_eff * k / 2) with shape (len(tau), len(k))."""
    return np.cos(np.multiply.outer(np.atleast_1d(tau_eff) * (0.5 * scale), k))


def pi_factor(k_values, tau_eff, f_scale: float = 1.0, chunk: int = 2**22):
    """prod_j cos(f_scale * tau_eff * k_j / 2); ``tau_eff`` may be an array.

    An empty coefficient list gives 1 (no dipolar coupling, no decay).
    """
    k = _k_array(k_values)
    tau = np.asarray(tau_eff, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau_eff must be non-negative")
    if not 0 < f_scale <= 1:
        raise ValueError("f_scale must lie in (0, 1]")
    flat = np.atleast_1d(tau).ravel()
    out = np.empty(flat.shape)
    step = max(1, chunk // max(1, len(k)))
    for start in range(0, len(flat), step):
        sl = slice(start, start + step)
        out[sl] = _cos_table(k, flat[sl], f_scale).prod(axis=1)
    if tau.ndim == 0:
        return float(out[0])
    return out.reshape(tau.shape)


def _mc_chunk(cosines, f, seed, streams):
    n_sites = cosines.shape[1]
    values = np.empty((len(streams), cosines.shape[0]))
    for row, r in enumerate(streams):
        occupied = occupation_rng(seed, r).random(n_sites) < f
        values[row] = cosines[:, occupied].prod(axis=1)
    return values


def pi_factor_mc(cluster, f: float, tau_eff, n_realizations: int, seed: int,
                 threads: int = 1, chunk_size: int = 256):
    """Disorder average of the decay product over random site occupations.

    Realization ``r`` draws its occupation mask from the stream ``(seed, r)``,
    so the result is identical for any ``threads``. Returns ``(mean,
    std_error)``; both are arrays when ``tau_eff`` is an array.
    """
    f = check_fraction(f)
    if n_realizations < 1:
        raise ValueError("n_realizations must be >= 1")
    tau = np.asarray(tau_eff, dtype=float)
    k = _k_array(cluster)
    if f == 1.0:
        mean = pi_factor(k, tau)
        return mean, (0.0 if tau.ndim == 0 else np.zeros(tau.shape))

    cosines = _cos_table(k, tau.ravel())
    blocks = [range(s, min(s + chunk_size, n_realizations))
              for s in range(0, n_realizations, chunk_size)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda b: _mc_chunk(cosines, f, seed, b), blocks))
    else:
        parts = [_mc_chunk(cosines, f, seed, b) for b in blocks]
    values = np.concatenate(parts, axis=0)

    mean = values.mean(axis=0)
    if n_realizations > 1:
        err = values.std(axis=0, ddof=1) / math.sqrt(n_realizations)
    else:
        err = np.zeros_like(mean)
    # identical samples (e.g. tau_eff = 0) have exactly zero spread
    same = np.all(values == values[0], axis=0)
    mean = np.where(same, values[0], mean)
    err = np.where(same, 0.0, err)
    if tau.ndim == 0:
        return float(mean[0]), float(err[0])
    return mean.reshape(tau.shape), err.reshape(tau.shape)


def exact_disorder_mean(k_values, f: float, tau_eff):
    """prod_j (1 - f + f cos(tau_eff k_j / 2)): the exact disorder average."""
    f = check_fraction(f)
    k = _k_array(k_values)
    vals = (1 - f + f * _cos_table(k, tau_eff)).prod(axis=1)
    return float(vals[0]) if np.ndim(tau_eff) == 0 else vals.reshape(np.shape(tau_eff))


# --------------------------------------------------------------------------
# signals


def _check_redfield(system: SpinSystem, drive: DriveParams):
    ratio = k0en(system, drive.constants) / (drive.constants.hbar * drive.omega1)
    if ratio > REDFIELD_THRESHOLD:
        warnings.warn(
            f"K0en/hbar*omega1 = {ratio:.3g} exceeds {REDFIELD_THRESHOLD}; "
            "the weak dipolar coupling truncation is not reliable",
            ValidityWarning, stacklevel=3)


def signals(state: InitialState, system: SpinSystem, drive: DriveParams, cluster,
            time_grid) -> NutationSignal:
    """Closed-form central-spin expectation values on ``time_grid`` (seconds).

    thermal_both:
        sx = A Π sinθ cos(Ω_R t), sy = A Π sinθ sin(Ω_R t), sz = −A cosθ,
        A = ħω₀/4kT.
    electron_down_nuclear_thermal:
        same structure with A = 1/2 (the pure |−⟩ polarisation); the
        nuclear-Zeeman cross term of the initial state is neglected, see
        :func:`nuclear_zeeman_correction`.

    Dilution uses the mean-field replacement tau_eff -> f tau_eff.
    """
    system.require_spin_half()
    _check_redfield(system, drive)
    t = np.asarray(time_grid, dtype=float)
    _, tau_eff = reduced_time(t, system, drive)
    tau_eff = np.atleast_1d(tau_eff)
    pi = pi_factor(cluster, tau_eff, f_scale=system.f)

    if state.variant is StateVariant.THERMAL_BOTH:
        if not state.hta_valid(drive):
            warnings.warn(
                f"hbar*omega0/kT = {state.zeeman_ratio(drive):.3g} exceeds {HTA_THRESHOLD}; "
                "the high-temperature expansion is questionable",
                ValidityWarning, stacklevel=2)
        amplitude = 0.25 * state.zeeman_ratio(drive)
    else:
        amplitude = 0.5

    st, ct = drive.sin_theta, drive.cos_theta
    phase = drive.omega_r * t
    transverse = amplitude * st * pi
    return NutationSignal(
        t=t,
        tau_eff=tau_eff,
        pi=pi,
        sx=transverse * np.cos(phase),
        sy=transverse * np.sin(phase),
        sz=np.full(t.shape, -amplitude * ct),
        amplitude_A=amplitude,
        omega_r=drive.omega_r,
        sin_theta=st,
    )


def coherence_time(system: SpinSystem, drive: DriveParams) -> float:
    """t_DC = (1/f) π ħ / (2 K0en cos²θ); infinite at exact resonance."""
    c2 = drive.cos_theta**2
    if c2 == 0:
        return math.inf
    return math.pi * drive.constants.hbar / (2 * system.f * k0en(system, drive.constants) * c2)


def coherence_time_small_detuning(system: SpinSystem, drive: DriveParams):
    """Small-detuning form (1/f)(πħ/2K0en)(ω₁/Δ)².

    Returns ``(t_dc, valid)`` where ``valid`` is False once |Δ|/ω₁ exceeds
    :data:`SMALL_DETUNING_THRESHOLD`.
    """
    valid = abs(drive.delta) / drive.omega1 <= SMALL_DETUNING_THRESHOLD
    if drive.delta == 0:
        return math.inf, valid
    t = (math.pi * drive.constants.hbar / (2 * system.f * k0en(system, drive.constants))
         * (drive.omega1 / drive.delta) ** 2)
    return t, valid


# --------------------------------------------------------------------------
# initial-state corrections


def _leave_one_out_sum(k, tau_eff, weights):
    """sum_m w_m sin(x_m) prod_{j != m} cos(x_j) with x = tau_eff k / 2."""
    x = np.multiply.outer(np.atleast_1d(tau_eff) * 0.5, k)
    c = np.cos(x)
    ones = np.ones((x.shape[0], 1))
    before = np.cumprod(np.hstack([ones, c[:, :-1]]), axis=1)
    after = np.cumprod(np.hstack([ones, c[:, :0:-1]]), axis=1)[:, ::-1]
    return (weights * np.sin(x) * before * after).sum(axis=1)


def initial_state_correction(system: SpinSystem, drive: DriveParams, cluster,
                             temperature: float, tau_eff):
    """Coefficient of s_y in the reduced density operator (rotating frame X)
    contributed by the dipolar term of the thermal initial state:

        sum_m (K0en k_m / 4kT) sinθ cosθ sin(tau_eff k_m/2) prod_{j≠m} cos(tau_eff k_j/2).

    The expectation-value shift is half this coefficient.
    """
    system.require_spin_half()
    k = _k_array(cluster)
    c = drive.constants
    weights = k0en(system, c) * k / (4 * c.k_B * temperature)
    out = drive.sin_theta * drive.cos_theta * _leave_one_out_sum(k, tau_eff, weights)
    return float(out[0]) if np.ndim(tau_eff) == 0 else out.reshape(np.shape(tau_eff))


def nuclear_zeeman_correction(drive: DriveParams, cluster, temperature: float, tau_eff):
    """s_y coefficient from the (1−2s_z)⊗(H_Zn/kT) cross term of the |−⟩ state.

    Same structure as :func:`initial_state_correction` with K0en k_m replaced
    by 2ħω₀ₙ for every nucleus.
    """
    k = _k_array(cluster)
    c = drive.constants
    weights = np.full(k.shape, 2 * c.hbar * drive.omega0n / (4 * c.k_B * temperature))
    out = drive.sin_theta * drive.cos_theta * _leave_one_out_sum(k, tau_eff, weights)
    return float(out[0]) if np.ndim(tau_eff) == 0 else out.reshape(np.shape(tau_eff))


def rotate_sy_coefficient(coefficient, omega_r, t):
    """Expectation shifts (d<s_x>, d<s_y>) of a coefficient c multiplying s_y in X."""
    phase = omega_r * np.asarray(t, dtype=float)
    return -0.5 * coefficient * np.sin(phase), 0.5 * coefficient * np.cos(phase)

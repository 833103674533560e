"""Method-of-moments description of the unsaturated ESR line.

The secular electron-nuclear coupling s_z sum_j K0en k_j I_jz gives, for a
site filling fraction f and nuclear spin I,

    ħ²M₂ = (1/3) f K0en² I(I+1) S2
    ħ⁴M₄ = (K0en⁴ I(I+1)/15) [f S4 (3I²+3I−1) + 5 f² S× I(I+1)]

with S2 = Σk², S4 = Σk⁴ and S× = Σ_{j≠l} k_j² k_l². Moments are returned in
(rad/s)² and (rad/s)⁴.
"""

import math
import warnings
from dataclasses import dataclass
from enum import Enum

from .constants import CONSTANTS, PhysicalValidityError, ValidityWarning
from .dynamics import DriveParams, SpinSystem, coherence_time, k0en
from .lattice import CONVERGED_CM, generate_cluster, lattice_sums

#: Gaussian half-width at half maximum in units of sqrt(M2), as conventionally
#: rounded; the analytic value is sqrt(2 ln 2) = 1.1774.
GAUSSIAN_HWHM_FACTOR = 1.18
LORENTZIAN_FACTOR = math.pi / (2 * math.sqrt(3))
#: At or below this filling fraction the line is treated as a cut-off Lorentzian.
DILUTE_LIMIT = 0.05


class Regime(str, Enum):
    GAUSSIAN = "Gaussian"
    CUTOFF_LORENTZIAN = "CutoffLorentzian"
    INTERMEDIATE = "Intermediate"


@dataclass(frozen=True)
class MomentReport:
    m2: float
    m4: float
    ratio: float
    regime: Regime
    delta: float
    delta_b: float
    tdc_at_delta: float
    delta_gaussian: float = math.nan
    delta_lorentzian: float = math.nan
    m2_reduced: float = math.nan  # ħ²M₂ / K0en²
    m4_reduced: float = math.nan  # ħ⁴M₄ / K0en⁴


def _spin_factors(I):
    g = I * (I + 1)
    return 3 * I * I + 3 * I - 1, g


def second_moment(cluster, system: SpinSystem, constants=CONSTANTS) -> float:
    s2, _, _ = lattice_sums(cluster)
    K = k0en(system, constants)
    I = system.nuclear_I
    return system.f * K**2 * I * (I + 1) * s2 / (3 * constants.hbar**2)


def fourth_moment(cluster, system: SpinSystem, constants=CONSTANTS) -> float:
    _, s4, s_cross = lattice_sums(cluster)
    K = k0en(system, constants)
    I, f = system.nuclear_I, system.f
    fI, gI = _spin_factors(I)
    val = K**4 * gI / 15 * (f * s4 * fI + 5 * f * f * s_cross * gI)
    return val / constants.hbar**4


def fourth_moment_spin_half(cluster, system: SpinSystem, constants=CONSTANTS) -> float:
    """(K0en⁴/16)(f S4 + 3 f² S×)/ħ⁴, the I = 1/2 special case written out."""
    _, s4, s_cross = lattice_sums(cluster)
    K = k0en(system, constants)
    f = system.f
    return K**4 / 16 * (f * s4 + 3 * f * f * s_cross) / constants.hbar**4


def dilute_ratio_estimate(f: float) -> float:
    """Rounded large-lattice form 0.20 (1/f + 11.8) of M₄/M₂²."""
    return 0.20 * (1 / f + 11.8)


def ratio_and_regime(m2: float, m4: float, f: float):
    if m2 <= 0:
        raise ValueError("second moment must be positive")
    ratio = m4 / m2**2
    if f == 1.0:
        regime = Regime.GAUSSIAN
    elif f <= DILUTE_LIMIT:
        regime = Regime.CUTOFF_LORENTZIAN
    else:
        regime = Regime.INTERMEDIATE
    return ratio, regime


def gaussian_half_width(m2: float) -> float:
    return GAUSSIAN_HWHM_FACTOR * math.sqrt(m2)


def lorentzian_half_width(m2: float, m4: float) -> float:
    return LORENTZIAN_FACTOR * m2**1.5 / math.sqrt(m4)


def half_width(m2: float, m4: float, regime: Regime, f: float = None) -> float:
    """Half-width δ in rad/s for the given line-shape regime.

    The cut-off Lorentzian branch is undefined for an undiluted lattice and
    raises :class:`PhysicalValidityError` at f = 1; above the dilute limit it
    only warns. The intermediate regime picks the branch whose M₄/M₂² is
    nearer (3 for a Gaussian, >= 6 for the cut-off Lorentzian).
    """
    regime = Regime(regime)
    if regime is Regime.INTERMEDIATE:
        warnings.warn("intermediate dilution: neither line-shape limit is certified",
                      ValidityWarning, stacklevel=2)
        regime = Regime.GAUSSIAN if m4 / m2**2 < 4.5 else Regime.CUTOFF_LORENTZIAN
        if regime is Regime.CUTOFF_LORENTZIAN:
            return lorentzian_half_width(m2, m4)
    if regime is Regime.GAUSSIAN:
        return gaussian_half_width(m2)
    if f is not None:
        if f == 1.0:
            raise PhysicalValidityError("the cut-off Lorentzian width is forbidden at f = 1")
        if f > DILUTE_LIMIT:
            warnings.warn(f"cut-off Lorentzian width used at f = {f} > {DILUTE_LIMIT}",
                          ValidityWarning, stacklevel=2)
    return lorentzian_half_width(m2, m4)


def to_tesla(delta: float, system: SpinSystem, constants=CONSTANTS) -> float:
    """Convert an angular frequency to field units with |γ_e| = g_e μ_B / ħ."""
    return delta * constants.hbar / (system.g_e * constants.mu_B)


def gyromagnetic_ratio(system: SpinSystem, constants=CONSTANTS) -> float:
    return system.g_e * constants.mu_B / constants.hbar


def _default_cluster(cluster):
    return generate_cluster(CONVERGED_CM) if cluster is None else cluster


def line_half_width(system: SpinSystem, cluster=None, constants=CONSTANTS) -> float:
    cluster = _default_cluster(cluster)
    m2 = second_moment(cluster, system, constants)
    m4 = fourth_moment(cluster, system, constants)
    _, regime = ratio_and_regime(m2, m4, system.f)
    return half_width(m2, m4, regime, system.f)


def tdc_at_half_width(system: SpinSystem, B1: float, cluster=None, exact: bool = None,
                      constants=CONSTANTS) -> float:
    """Dipolar coherence time with the detuning set to the line half-width.

    For the undiluted (Gaussian) lattice the default is the closed form

        t = c B1² / (|γ_e| δ_B³),   c = (π/2) ħδ/K0en ≈ 3.39,

    i.e. the small-detuning limit; dilute lattices default to the exact
    expression at Δ = δ. ``exact`` forces either route.
    """
    if B1 <= 0:
        raise ValueError("B1 must be positive")
    cluster = _default_cluster(cluster)
    delta = line_half_width(system, cluster, constants)
    if exact is None:
        exact = system.f != 1.0
    if exact:
        drive = DriveParams(B0=0.0, B1=B1, delta=delta, g_e=system.g_e, g_n=system.g_n,
                            constants=constants)
        return coherence_time(system, drive)
    gamma = gyromagnetic_ratio(system, constants)
    delta_b = delta / gamma
    coeff = 0.5 * math.pi * constants.hbar * delta / k0en(system, constants)
    return coeff * B1**2 / (system.f * gamma * delta_b**3)


def moment_report(cluster, system: SpinSystem, B1: float, constants=CONSTANTS) -> MomentReport:
    m2 = second_moment(cluster, system, constants)
    m4 = fourth_moment(cluster, system, constants)
    ratio, regime = ratio_and_regime(m2, m4, system.f)
    d_gauss = gaussian_half_width(m2)
    d_lor = lorentzian_half_width(m2, m4) if system.f != 1.0 else math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ValidityWarning)
        delta = half_width(m2, m4, regime, system.f)
    if regime is Regime.INTERMEDIATE:
        warnings.warn(f"f = {system.f} is between the certified limits; both widths reported",
                      ValidityWarning, stacklevel=2)
    K = k0en(system, constants)
    hbar = constants.hbar
    return MomentReport(
        m2=m2,
        m4=m4,
        ratio=ratio,
        regime=regime,
        delta=delta,
        delta_b=to_tesla(delta, system, constants),
        tdc_at_delta=tdc_at_half_width(system, B1, cluster, constants=constants),
        delta_gaussian=d_gauss,
        delta_lorentzian=d_lor,
        m2_reduced=m2 * hbar**2 / K**2,
        m4_reduced=m4 * hbar**4 / K**4,
    )

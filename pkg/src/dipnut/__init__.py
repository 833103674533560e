"""Transient nutations of a central electron spin damped by dipolar coupling
to nuclear spins on a simple cubic lattice.

Submodules
----------
lattice    site enumeration, dipolar coefficients, lattice sums, dilution masks
dynamics   decay product, nutation signals, dipolar coherence time
linewidth  second/fourth moments, line-shape regime, half-widths
oracle     exact dense-operator reference on small clusters
cli        ``dipnut`` command-line front-end producing CSV
"""

__version__ = "0.1.0"

from .constants import CONSTANTS, PhysicalConstants
from .dynamics import (
    DriveParams,
    InitialState,
    NutationSignal,
    SpinSystem,
    StateVariant,
    coherence_time,
    k0en,
    pi_factor,
    pi_factor_mc,
    signals,
)
from .lattice import LatticeCluster, generate_cluster, lattice_sums
from .linewidth import MomentReport, Regime, moment_report

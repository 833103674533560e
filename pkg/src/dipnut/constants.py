"""Physical constants used throughout the package (SI units).

Values come from ``scipy.constants`` (CODATA); ``mu0_over_4pi`` is taken as
exactly 1e-7 T^2 m^3 / J.
"""

from dataclasses import dataclass

from scipy import constants as _codata


class ValidityWarning(UserWarning):
    """An approximation the model relies on is poorly satisfied."""


class PhysicalValidityError(ValueError):
    """A formula was requested outside the regime where it is defined."""


@dataclass(frozen=True)
class PhysicalConstants:
    mu0_over_4pi: float  # T^2 m^3 / J
    mu_B: float  # J / T
    mu_N: float  # J / T
    hbar: float  # J s
    k_B: float  # J / K

    def as_dict(self):
        return {
            "mu0_over_4pi": self.mu0_over_4pi,
            "mu_B": self.mu_B,
            "mu_N": self.mu_N,
            "hbar": self.hbar,
            "k_B": self.k_B,
        }


CONSTANTS = PhysicalConstants(
    mu0_over_4pi=1e-7,
    mu_B=_codata.physical_constants["Bohr magneton"][0],
    mu_N=_codata.physical_constants["nuclear magneton"][0],
    hbar=_codata.hbar,
    k_B=_codata.k,
)

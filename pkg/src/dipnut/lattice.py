"""Simple cubic lattice of nuclear sites around a central electron spin.

The central spin sits at the origin; the static field lies along the
four-fold [001] axis, so the secular dipolar coefficient of the site at
reduced position (i, j, k) is

    k_ijk = (1 - 3 k^2 / R^2) / R^3,    R^2 = i^2 + j^2 + k^2.

All sites with max(|i|, |j|, |k|) <= cm are kept ("common maximum" cutoff),
listed in lexicographic (i, j, k) order. Sums are accumulated with
``math.fsum`` so they are correctly rounded and independent of any
parallel evaluation order.
"""

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

#: Cutoff used as the converged reference for the lattice sums. The s2 tail
#: beyond it decays like cm^-3 and is below 1e-4 relative.
CONVERGED_CM = 50


@dataclass(frozen=True)
class SiteIndex:
    """Integer lattice position in units of the lattice constant."""

    i: int
    j: int
    k: int

    def __post_init__(self):
        if (self.i, self.j, self.k) == (0, 0, 0):
            raise ValueError("the origin holds the central electron spin, not a nuclear site")

    @property
    def reduced_distance(self) -> float:
        return math.sqrt(self.i**2 + self.j**2 + self.k**2)


def _freeze(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LatticeCluster:
    """Nuclear sites within the cubic cutoff ``cm`` and their dipolar sums.

    Attributes
    ----------
    cm : int
        Common maximum of |i|, |j|, |k|.
    sites : ndarray, shape (n, 3)
        Integer coordinates, lexicographically ordered, origin excluded.
    k_values : ndarray, shape (n,)
        Dimensionless dipolar coefficients aligned with ``sites``.
    s2, s4, s_cross : float
        sum k^2, sum k^4 and sum_{j != l} k_j^2 k_l^2.
    """

    cm: int
    sites: np.ndarray = field(repr=False)
    k_values: np.ndarray = field(repr=False)
    s2: float
    s4: float
    s_cross: float

    @property
    def n_sites(self) -> int:
        return len(self.k_values)

    def site(self, n: int) -> SiteIndex:
        i, j, k = (int(v) for v in self.sites[n])
        return SiteIndex(i, j, k)

    def subset(self, indices) -> np.ndarray:
        """k values of the selected sites (used to build small oracle clusters)."""
        return self.k_values[np.asarray(indices)]


def dipolar_coefficients(coords) -> np.ndarray:
    """Vectorised dipolar coefficient for an (n, 3) integer coordinate array."""
    c = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
    r2 = np.einsum("ij,ij->i", c, c).astype(float)
    if np.any(r2 == 0):
        raise ValueError("the origin is not a nuclear site")
    return (1.0 - 3.0 * c[:, 2] ** 2 / r2) / r2**1.5


def dipolar_coefficient(site: Union[SiteIndex, Sequence[int]]) -> float:
    """(1 - 3 cos^2 xi) / R^3 for one site, z being the static-field axis."""
    if not isinstance(site, SiteIndex):
        site = SiteIndex(*(int(v) for v in site))
    return float(dipolar_coefficients([(site.i, site.j, site.k)])[0])


def _sums(k_values):
    k2 = np.square(np.asarray(k_values, dtype=float))
    s2 = math.fsum(k2)
    s4 = math.fsum(np.square(k2))
    return s2, s4, s2 * s2 - s4


def lattice_sums(source) -> tuple:
    """Return ``(s2, s4, s_cross)`` for a cluster or a plain sequence of k values."""
    if isinstance(source, LatticeCluster):
        return source.s2, source.s4, source.s_cross
    return _sums(source)


def cubic_sites(cm: int) -> np.ndarray:
    rng = np.arange(-cm, cm + 1)
    grid = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid[np.any(grid != 0, axis=1)]


def generate_cluster(cm: int) -> LatticeCluster:
    """All sites with max(|i|,|j|,|k|) <= cm except the origin."""
    if int(cm) != cm or cm < 1:
        raise ValueError(f"cm must be a positive integer, got {cm!r}")
    cm = int(cm)
    sites = cubic_sites(cm)
    k_values = dipolar_coefficients(sites)
    s2, s4, s_cross = _sums(k_values)
    return LatticeCluster(cm, _freeze(sites), _freeze(k_values), s2, s4, s_cross)


# --------------------------------------------------------------------------
# dilution


@dataclass(frozen=True)
class Occupation:
    occupied: np.ndarray = field(repr=False)
    f: float
    seed: int
    stream: Union[int, None] = None

    @property
    def n_occupied(self) -> int:
        return int(np.count_nonzero(self.occupied))


def occupation_rng(seed: int, stream: Union[int, None] = None) -> np.random.Generator:
    """Philox4x64-10 generator keyed by ``(seed, stream)`` through a SeedSequence.

    Each Monte Carlo realization uses its own stream, so results do not depend
    on how realizations are distributed over workers.
    """
    entropy = [int(seed)] if stream is None else [int(seed), int(stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def check_fraction(f: float) -> float:
    f = float(f)
    if not 0.0 < f <= 1.0:
        raise ValueError(f"filling fraction must lie in (0, 1], got {f}")
    return f


def sample_occupation(cluster, f: float, seed: int, stream: Union[int, None] = None) -> Occupation:
    """Occupy each site independently with probability ``f``."""
    f = check_fraction(f)
    n = cluster.n_sites if isinstance(cluster, LatticeCluster) else len(cluster)
    u = occupation_rng(seed, stream).random(n)
    return Occupation(_freeze(u < f), f, int(seed), stream)

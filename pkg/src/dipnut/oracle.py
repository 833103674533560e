"""Exact dense-operator reference for small clusters.

Basis: product z-basis, electron factor first, then nuclei 1..N, each with
m descending. Hamiltonians are stored divided by ħ (rad/s).

The module deliberately does not reuse the closed forms from
:mod:`dipnut.dynamics` or :mod:`dipnut.linewidth`; it builds matrices,
propagates density operators, takes partial traces and evaluates commutator
traces explicitly.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, reduce

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sps

from .dynamics import (
    DriveParams,
    InitialState,
    NutationSignal,
    SpinSystem,
    StateVariant,
    initial_state_correction,
    k0en,
    reduced_time,
)

#: Largest Hilbert-space dimension handled with dense matrices.
MAX_DIM = 2**13


def spin_matrices(I: float):
    """(Ix, Iy, Iz) for spin ``I`` with m = I, I-1, ..., -I."""
    m = np.arange(I, -I - 1, -1)
    # <m+1|I+|m> = sqrt(I(I+1) - m(m+1)); row index of m+1 is one above m
    plus = np.diag(np.sqrt(I * (I + 1) - m[1:] * (m[1:] + 1)), k=1)
    ix = 0.5 * (plus + plus.T)
    iy = -0.5j * (plus - plus.T)
    iz = np.diag(m)
    return ix, iy, iz.astype(float)


def _embed(op, position, dims):
    """Operator acting on factor ``position`` of a tensor product with ``dims``."""
    factors = [sps.identity(d, format="csr") for d in dims]
    factors[position] = sps.csr_matrix(op)
    return reduce(lambda a, b: sps.kron(a, b, format="csr"), factors)


class ClusterOperatorSet:
    """Operators of one electron spin and ``n_nuclei`` nuclear spins.

    Spin operators are kept sparse; Hamiltonians and ``u2`` are built lazily.
    """

    def __init__(self, k_values, system: SpinSystem, drive: DriveParams, max_dim: int = MAX_DIM):
        self.k_values = np.asarray(k_values, dtype=float).ravel()
        self.system = system
        self.drive = drive
        self.nuclear_I = system.nuclear_I
        self.n_nuclei = len(self.k_values)
        d_n = int(round(2 * self.nuclear_I + 1))
        self.dims = [2] + [d_n] * self.n_nuclei
        self.dim = int(np.prod(self.dims))
        if self.dim > max_dim:
            mib = 16 * self.dim**2 / 2**20
            raise MemoryError(
                f"Hilbert space dimension {self.dim} exceeds the dense limit {max_dim} "
                f"(one complex matrix would take {mib:.0f} MiB)")
        self.nuclear_dim = self.dim // 2

        sx, sy, sz = spin_matrices(0.5)
        self.sx = _embed(sx, 0, self.dims)
        self.sy = _embed(sy, 0, self.dims)
        self.sz = _embed(sz, 0, self.dims)
        nx, ny, nz = spin_matrices(self.nuclear_I)
        self.iz = [_embed(nz, j + 1, self.dims) for j in range(self.n_nuclei)]
        self.iy = [_embed(ny, j + 1, self.dims) for j in range(self.n_nuclei)]
        self.iz_total = sum(self.iz, sps.csr_matrix((self.dim, self.dim)))
        self._single = {"sy": sy, "ny": ny}

    # coupling constants K_j / ħ in rad/s
    @property
    def couplings(self) -> np.ndarray:
        return k0en(self.system, self.drive.constants) * self.k_values / self.drive.constants.hbar

    @cached_property
    def h_den(self):
        """Secular electron-nuclear coupling sum_j K_j s_z I_jz."""
        out = sps.csr_matrix((self.dim, self.dim))
        for kj, izj in zip(self.couplings, self.iz):
            out = out + kj * (self.sz @ izj)
        return out.tocsr()

    @cached_property
    def h1_prime(self):
        d = self.drive
        return (d.delta * self.sz + d.omega1 * self.sx + d.delta_n * self.iz_total
                + self.h_den).tocsr()

    @cached_property
    def h_ze_eff(self):
        return (self.drive.omega_r * self.sz).tocsr()

    @cached_property
    def h_pen(self):
        return (self.drive.cos_theta**2 * self.h_den).tocsr()

    @cached_property
    def h_delta_n(self):
        return (self.drive.delta_n * self.drive.cos_theta * self.iz_total).tocsr()

    @cached_property
    def hp_prime(self):
        return (self.h_ze_eff + self.h_pen + self.h_delta_n).tocsr()

    @cached_property
    def u2(self) -> np.ndarray:
        """exp(iθ(s_y + sum_j I_jy)) as a tensor product of one-spin rotations."""
        theta = self.drive.theta
        factors = [sla.expm(1j * theta * self._single["sy"])]
        factors += [sla.expm(1j * theta * self._single["ny"])] * self.n_nuclei
        return reduce(np.kron, factors)

    def u2_direct(self) -> np.ndarray:
        """Same rotation from the exponential of the full generator (checks ``u2``)."""
        gen = self.sy + sum(self.iy, sps.csr_matrix((self.dim, self.dim)))
        return sla.expm(1j * self.drive.theta * gen.toarray())

    def lab_zeeman(self):
        """(H_Ze, H_Zn) / ħ in the laboratory frame."""
        d = self.drive
        return (d.omega0 * self.sz).tocsr(), (-d.omega0n * self.iz_total).tocsr()


def build_operators(k_values, system: SpinSystem, drive: DriveParams,
                    max_dim: int = MAX_DIM) -> ClusterOperatorSet:
    return ClusterOperatorSet(k_values, system, drive, max_dim)


def initial_density(ops: ClusterOperatorSet, state: InitialState, exact_boltzmann: bool = False,
                    temperature: float = None, include_dipolar: bool = True) -> np.ndarray:
    """Initial density matrix in the laboratory (z-product) basis.

    thermal_both, linearised:   (1 − H_Z/kT) / dim
    thermal_both, exact:        exp(−(H_Z + H'_den)/kT) / Tr
    electron_down:              (1 − 2s_z)/2 ⊗ (1 − H_Zn/kT)/d_n

    ``include_dipolar=False`` drops H'_den from the exact Boltzmann exponent.
    """
    c = ops.drive.constants
    T = state.temperature if temperature is None else temperature
    beta_hbar = c.hbar / (c.k_B * T) if math.isfinite(T) else 0.0
    h_ze, h_zn = ops.lab_zeeman()
    ident = sps.identity(ops.dim, format="csr")
    if state.variant is StateVariant.THERMAL_BOTH:
        if exact_boltzmann:
            h = (h_ze + h_zn + ops.h_den if include_dipolar else h_ze + h_zn).toarray()
            offdiag = h - np.diag(np.diag(h))
            if np.any(offdiag):
                w = sla.expm(-beta_hbar * h)
            else:
                # shift by the largest weight to avoid overflow
                e = -beta_hbar * np.diag(h)
                w = np.diag(np.exp(e - e.max()))
            rho = w / np.trace(w)
        else:
            rho = ((ident - beta_hbar * (h_ze + h_zn)) / ops.dim).toarray()
    else:
        electron_down = ident - 2 * ops.sz
        nuclear = ident - beta_hbar * h_zn
        rho = (electron_down @ nuclear / ops.dim).toarray()
    return rho.astype(complex)


def partial_trace_nuclear(rho, ops: ClusterOperatorSet) -> np.ndarray:
    """Reduced 2x2 electron density matrix Tr_n{rho}."""
    r = rho.reshape(2, ops.nuclear_dim, 2, ops.nuclear_dim)
    return np.einsum("anbn->ab", r)


_SX = spin_matrices(0.5)


def _expectations(rho_e):
    """<s_x>, <s_y>, <s_z> from 2x2 reduced density matrices of shape (..., 2, 2)."""
    sx, sy, sz = _SX
    return tuple(np.real(np.einsum("...ab,ba->...", rho_e, op)) for op in (sx, sy, sz))


def _signal_from_components(t, tau_eff, sx, sy, sz, sin_theta, omega_r):
    perp = np.hypot(sx, sy)
    perp0 = perp[0] if len(perp) else 1.0
    pi = perp / perp0 if perp0 else np.ones_like(perp)
    amp = perp0 / sin_theta if sin_theta else math.nan
    return NutationSignal(t=t, tau_eff=tau_eff, pi=pi, sx=sx, sy=sy, sz=sz,
                          amplitude_A=amp, omega_r=omega_r, sin_theta=sin_theta)


def _nuclear_diagonal_gaps(ops, *components):
    """Frequency gaps w_(a,nu) - w_(b,nu) of diagonal Hamiltonian components.

    Gaps are formed component by component so a large term that is identical
    for both electron states (the nuclear Zeeman part) cancels exactly.
    Returns shape (nuclear_dim, 2, 2).
    """
    n = ops.nuclear_dim
    gaps = np.zeros((n, 2, 2))
    for comp in components:
        diag = np.real(comp.diagonal()).reshape(2, n)
        gaps += diag.T[:, :, None] - diag.T[:, None, :]
    return gaps


def evolve_and_reduce(ops: ClusterOperatorSet, rho0: np.ndarray, hamiltonian: str = "H_P_prime",
                      time_grid=None) -> NutationSignal:
    """Propagate ``rho0`` and return the central-spin expectation values.

    ``H_P_prime``: rho'_P(0) = U2 rho0 U2†, phase evolution under the diagonal
    H'_P, partial trace over the nuclei, <s_i> = Tr_e{rho_e s_i}.
    ``H_1_prime``: rho0 evolved under H'_1 by Hermitian eigendecomposition, read
    out in the sample-tied frame as Tr{U2 rho_1(t) U2† s_i}.
    """
    t = np.asarray(time_grid, dtype=float)
    d = ops.drive
    _, tau_eff = reduced_time(t, ops.system, d)
    tau_eff = np.atleast_1d(tau_eff)
    u2 = ops.u2

    if hamiltonian == "H_P_prime":
        if (ops.hp_prime - sps.diags(ops.hp_prime.diagonal())).count_nonzero():
            raise AssertionError("H'_P is not diagonal in the product basis")
        rho_p = u2 @ rho0 @ u2.conj().T
        n = ops.nuclear_dim
        # phase evolution is elementwise; the partial trace only sums the
        # elements diagonal in the nuclear configuration
        nu = np.arange(n)
        blocks = rho_p.reshape(2, n, 2, n)[:, nu, :, nu]  # (n, 2, 2)
        gaps = _nuclear_diagonal_gaps(ops, ops.h_ze_eff, ops.h_pen, ops.h_delta_n)
        phases = np.exp(-1j * np.multiply.outer(t, gaps))  # (T, n, 2, 2)
        rho_e = np.einsum("nab,tnab->tab", blocks, phases)
        sx, sy, sz = _expectations(rho_e)
    elif hamiltonian == "H_1_prime":
        energies, vecs = np.linalg.eigh(ops.h1_prime.toarray())
        rho_tilde = vecs.conj().T @ rho0 @ vecs
        observables = []
        for op in (ops.sx, ops.sy, ops.sz):
            o = u2.conj().T @ op.toarray() @ u2
            observables.append(vecs.conj().T @ o @ vecs)
        gaps = energies[:, None] - energies[None, :]
        out = []
        for o in observables:
            # <O>(t) = sum_ab rho_ab e^{-i(E_a - E_b)t} O_ba
            weights = rho_tilde * o.T
            vals = [np.real(np.sum(weights * np.exp(-1j * gaps * tt))) for tt in t]
            out.append(np.array(vals))
        sx, sy, sz = out
    else:
        raise ValueError(f"unknown hamiltonian {hamiltonian!r}")
    return _signal_from_components(t, tau_eff, sx, sy, sz, d.sin_theta, d.omega_r)


def _commutator(a, b):
    return (a @ b - b @ a).tocsr()


def _trace_product(a, b) -> float:
    return float(np.real(a.multiply(b.T).sum()))


def moment_trace(ops: ClusterOperatorSet, order: int) -> float:
    """Line moment from explicit commutator traces, in (rad/s)^order.

    order 2:  -Tr{[H'_den, s_x]^2} / Tr{s_x^2}
    order 4:   Tr{[H'_den, [H'_den, s_x]]^2} / Tr{s_x^2}
    """
    h = ops.h_den
    norm = _trace_product(ops.sx, ops.sx)
    c1 = _commutator(h, ops.sx)
    if order == 2:
        return -_trace_product(c1, c1) / norm
    if order == 4:
        c2 = _commutator(h, c1)
        return _trace_product(c2, c2) / norm
    raise ValueError("order must be 2 or 4")


@dataclass
class CorrectionReport:
    """Oracle check of the dipolar term in the thermal initial state."""

    t: np.ndarray
    tau_eff: np.ndarray
    oracle: np.ndarray = field(repr=False)  # s_y excess in the frame of X
    analytic: np.ndarray = field(repr=False)
    resolvable: np.ndarray = field(repr=False)
    noise: float
    max_relative_deviation: float

    @property
    def agrees(self) -> bool:
        return bool(np.any(self.resolvable)) and self.max_relative_deviation <= 0.05


def appendix_a_correction_check(ops: ClusterOperatorSet, temperature: float,
                                time_grid) -> CorrectionReport:
    """Compare the dipolar part of the exact thermal state with the analytic sum.

    The reference is the exact Boltzmann state without H'_den, so nonlinear
    Zeeman terms (including the ω0·ω0n s_z I_z cross term, which has the same
    operator structure as the dipolar term) cancel in the difference. The
    excess (d<s_x>, d<s_y>) is rotated back by Ω_R t and its s_y part is
    compared with half the analytic s_y coefficient. Only points where the
    analytic value exceeds ten times the numerical noise are compared.
    """
    state = InitialState(StateVariant.THERMAL_BOTH, temperature)
    t = np.asarray(time_grid, dtype=float)
    exact = evolve_and_reduce(ops, initial_density(ops, state, exact_boltzmann=True), "H_P_prime", t)
    bare = initial_density(ops, state, exact_boltzmann=True, include_dipolar=False)
    linear = evolve_and_reduce(ops, bare, "H_P_prime", t)
    dx, dy = exact.sx - linear.sx, exact.sy - linear.sy
    phase = ops.drive.omega_r * t
    frame_y = dy * np.cos(phase) - dx * np.sin(phase)
    analytic = 0.5 * initial_state_correction(ops.system, ops.drive, ops.k_values,
                                              temperature, exact.tau_eff)
    scale = max(np.max(np.abs(exact.sx)), np.max(np.abs(exact.sz)), 1e-300)
    noise = 1e3 * np.finfo(float).eps * scale
    resolvable = np.abs(analytic) > 10 * noise
    if np.any(resolvable):
        rel = np.abs(frame_y[resolvable] - analytic[resolvable]) / np.abs(analytic[resolvable])
        worst = float(rel.max())
    else:
        worst = math.nan
    return CorrectionReport(t, exact.tau_eff, frame_y, analytic, resolvable, noise, worst)


def max_signal_deviation(reference: NutationSignal, other: NutationSignal):
    """(max absolute, max relative) deviation of (sx, sy, sz) over the grid."""
    a = np.stack([reference.sx, reference.sy, reference.sz])
    b = np.stack([other.sx, other.sy, other.sz])
    diff = np.max(np.abs(a - b))
    scale = np.max(np.abs(a))
    return float(diff), float(diff / scale) if scale else float(diff)

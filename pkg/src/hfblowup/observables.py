"""Functionals of an orbital set that enter the virial blow-up argument.

Position-weighted quantities use box-centered coordinates. Since ``x`` jumps
at the periodic seam they are only meaningful while little mass sits near the
boundary; each of them logs a warning when :func:`boundary_mass` beyond 80% of
the half box exceeds ``1e-6 N``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import boundary_mass, gradient
from .hamiltonian import PairPotentials, check_drift, pair_potentials
from .orbitals import OrbitalSet, angular_anisotropy, density, gram_drift

logger = logging.getLogger(__name__)

BOUNDARY_FRACTION = 0.8
BOUNDARY_THRESHOLD = 1e-6  # times N

CSV_COLUMNS_HEAD = (
    "t", "T", "D", "X", "E_hf", "N", "L2", "M_vir", "A_dil", "T_p2", "sobolev_half",
)
CSV_COLUMNS_TAIL = ("tail_frac", "gram_drift", "anisotropy")


def _quadratic_form(S: OrbitalSet, kind: str, fields: np.ndarray | None = None) -> float:
    """``sum_j <f_j, s(p) f_j>`` evaluated in Fourier space."""
    f = S.psi if fields is None else fields
    g = S.grid
    fh = g.fft(f)
    w = np.abs(fh) ** 2
    return float(np.sum(w * g.symbol(kind).values) * g.dv / g.n**3)


def boundary_warning(S: OrbitalSet, rho: np.ndarray | None = None) -> float:
    rho = density(S) if rho is None else rho
    outside = boundary_mass(rho, S.grid, BOUNDARY_FRACTION)
    if outside > BOUNDARY_THRESHOLD * S.N:
        logger.warning(
            "boundary mass %.3e exceeds %.1e N; position observables unreliable",
            outside,
            BOUNDARY_THRESHOLD,
        )
    return outside


# -- energy ------------------------------------------------------------------------


@dataclass
class EnergySplit:
    T: float
    D: float
    X: float
    E_hf: float

    def __iter__(self):
        return iter((self.T, self.D, self.X, self.E_hf))


def interaction_terms(S: OrbitalSet, potentials: PairPotentials | None = None) -> tuple:
    """Direct and exchange Coulomb integrals ``(D, X)`` (without kappa)."""
    if potentials is None:
        potentials = pair_potentials(S)
    psi, dv = S.psi, S.grid.dv
    rho = density(S)
    D = float(np.sum(rho * potentials.direct.real) * dv)
    X = 0.0
    for (i, j), V in potentials.pair.items():
        rho_ij = psi[j] * psi[i].conj()
        contrib = float(np.real(np.vdot(rho_ij, V)) * dv)
        X += contrib if i == j else 2.0 * contrib
    return D, X


def kinetic(S: OrbitalSet) -> float:
    return _quadratic_form(S, "dispersion")


def energy(S: OrbitalSet, potentials: PairPotentials | None = None, drift_tol: float | None = None) -> EnergySplit:
    """Kinetic, direct, exchange and total Hartree-Fock energy.

    In ``hartree`` mode the exchange integral is still reported but left out
    of the total; in ``free`` mode the total is the kinetic energy.
    """
    if drift_tol is not None:
        check_drift(S, drift_tol)
    T = kinetic(S)
    D, X = interaction_terms(S, potentials)
    if S.mode == "free":
        E = T
    elif S.mode == "hartree":
        E = T - 0.5 * S.kappa * D
    else:
        E = T - 0.5 * S.kappa * (D - X)
    return EnergySplit(T, D, X, E)


def particle_number(S: OrbitalSet) -> float:
    return float(np.sum(np.abs(S.psi) ** 2) * S.grid.dv)


def sobolev_half(S: OrbitalSet) -> float:
    """``tr (1 - Laplacian)^{1/2} Q``."""
    return _quadratic_form(S, "sobolev_half")


def kinetic_p2(S: OrbitalSet) -> float:
    """``tr p^2 / sqrt(p^2 + m^2) Q``."""
    return _quadratic_form(S, "p2_over_dispersion")


def concentration(S: OrbitalSet, R: float, rho: np.ndarray | None = None) -> float:
    """Mass inside the ball ``|x| <= R``."""
    rho = density(S) if rho is None else rho
    return float(np.sum(rho[S.grid.r <= R]) * S.grid.dv)


# -- angular momentum and virial observables ---------------------------------------------


def angular_momentum_components(S: OrbitalSet) -> tuple:
    """``(L_1 psi, L_2 psi, L_3 psi)`` with ``L = x ^ (-i grad)``."""
    x, y, z = S.grid.coords
    dx, dy, dz = gradient(S.psi, S.grid)
    return (
        -1j * (y * dz - z * dy),
        -1j * (z * dx - x * dz),
        -1j * (x * dy - y * dx),
    )


def angular_momentum_sq(S: OrbitalSet) -> float:
    """``tr L^2 Q = sum_{j, l} ||L_l psi_j||^2``."""
    boundary_warning(S)
    return float(sum(np.sum(np.abs(Lc) ** 2) for Lc in angular_momentum_components(S)) * S.grid.dv)


def m_virial(S: OrbitalSet) -> float:
    """``tr M Q`` with ``M = sum_a x_a sqrt(p^2 + m^2) x_a``, in symmetric form."""
    boundary_warning(S)
    return sum(_quadratic_form(S, "dispersion", c * S.psi) for c in S.grid.coords)


def dilation(S: OrbitalSet) -> float:
    """``tr (p.x + x.p) Q = 2 sum_j Im <psi_j, x . grad psi_j>``."""
    boundary_warning(S)
    grads = gradient(S.psi, S.grid)
    xg = sum(c * d for c, d in zip(S.grid.coords, grads))
    return float(2.0 * np.imag(np.vdot(S.psi, xg)) * S.grid.dv)


@dataclass
class VirialRHS:
    value: float  # d/dt tr (p.x + x.p) Q
    gap: float  # 2 E_hf - value
    gap_lower_bound: float  # 2 m^2 tr (p^2 + m^2)^{-1/2} Q


def virial_rhs(S: OrbitalSet, split: EnergySplit | None = None, T_p2: float | None = None) -> VirialRHS:
    """Exact time derivative of the dilation observable.

    ``2 tr p^2/sqrt(p^2+m^2) Q - kappa D + kappa X`` (``hartree`` mode drops
    X, ``free`` mode drops both interaction terms).
    """
    if split is None:
        split = energy(S)
    if T_p2 is None:
        T_p2 = kinetic_p2(S)
    value = 2.0 * T_p2
    if S.mode != "free":
        value -= S.kappa * split.D
        if S.mode == "hartree-fock":
            value += S.kappa * split.X
    if S.grid.m > 0:
        bound = 2.0 * S.grid.m**2 * _quadratic_form(S, "inverse_dispersion")
    else:
        bound = 0.0
    return VirialRHS(value, 2.0 * split.E_hf - value, bound)


# -- records -------------------------------------------------------------------------


def tail_fraction(S: OrbitalSet) -> float:
    """Spectral mass share of all orbitals in ``|k|_inf > (2/3) k_max``."""
    g = S.grid
    w = np.sum(np.abs(g.fft(S.psi)) ** 2, axis=0)
    total = w.sum()
    if total == 0:
        return 0.0
    return float(w[g.kinf > (2.0 / 3.0) * g.k_max].sum() / total)


@dataclass
class ObservableRecord:
    t: float
    T: float
    D: float
    X: float
    E_hf: float
    N: float
    L2: float
    M_vir: float
    A_dil: float
    T_p2: float
    sobolev_half: float
    concentration: dict = field(default_factory=dict)
    tail_frac: float = 0.0
    gram_drift: float = 0.0
    anisotropy: float = 0.0
    virial_rhs: float = 0.0
    virial_gap: float = 0.0

    def columns(self) -> list:
        radii = [f"conc_{r:g}" for r in self.concentration]
        return list(CSV_COLUMNS_HEAD) + radii + list(CSV_COLUMNS_TAIL)

    def row(self) -> list:
        head = [getattr(self, c) for c in CSV_COLUMNS_HEAD]
        return head + list(self.concentration.values()) + [self.tail_frac, self.gram_drift, self.anisotropy]

    def to_json(self) -> dict:
        d = asdict(self)
        d["concentration"] = {f"{k:g}": v for k, v in self.concentration.items()}
        return d


def observe(S: OrbitalSet, radii=(), potentials: PairPotentials | None = None) -> ObservableRecord:
    """Evaluate every monitored functional on `S` with one set of pair potentials."""
    if potentials is None:
        potentials = pair_potentials(S, exchange=True)
    rho = density(S)
    split = energy(S, potentials)
    T_p2 = kinetic_p2(S)
    vr = virial_rhs(S, split, T_p2)
    return ObservableRecord(
        t=S.t,
        T=split.T,
        D=split.D,
        X=split.X,
        E_hf=split.E_hf,
        N=particle_number(S),
        L2=angular_momentum_sq(S),
        M_vir=m_virial(S),
        A_dil=dilation(S),
        T_p2=T_p2,
        sobolev_half=sobolev_half(S),
        concentration={float(R): concentration(S, R, rho) for R in radii},
        tail_frac=tail_fraction(S),
        gram_drift=gram_drift(S),
        anisotropy=angular_anisotropy(rho, S.grid),
        virial_rhs=vr.value,
        virial_gap=vr.gap,
    )

"""Spherically symmetric initial data built from filled angular-momentum shells."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import sph_harm_y

from .grid import Grid, boundary_mass
from .observables import (
    angular_momentum_sq,
    energy,
    particle_number,
    tail_fraction,
)
from .orbitals import (
    OrbitalSet,
    angular_anisotropy,
    density,
    gram_drift,
    lowdin_orthonormalize,
)

PROFILES = ("gaussian", "exponential", "poly_gaussian")
CONTAIN_FRACTION = 0.8
CONTAIN_TOL = 1e-9


class InitialDataError(ValueError):
    pass


@dataclass(frozen=True)
class Shell:
    """One filled shell: all ``2l+1`` real harmonics times a radial profile.

    The orbital is ``g(r) r^l Y_lm(x/|x|)`` with ``g`` one of

    * ``gaussian``: ``exp(-r^2 / (2 scale^2))``
    * ``exponential``: ``exp(-sqrt(r^2 + scale^2) / scale)``, smoothed at the origin
    * ``poly_gaussian``: ``(r / scale)^(2 degree) exp(-r^2 / (2 scale^2))``
    """

    l: int
    profile: str = "gaussian"
    scale: float = 1.0
    degree: int = 0

    def __post_init__(self):
        if self.l < 0 or int(self.l) != self.l:
            raise InitialDataError(f"l must be a non-negative integer, got {self.l}")
        if self.profile not in PROFILES:
            raise InitialDataError(f"unknown profile {self.profile!r}; expected one of {PROFILES}")
        if not self.scale > 0:
            raise InitialDataError(f"scale must be positive, got {self.scale}")
        if self.degree < 0:
            raise InitialDataError(f"degree must be non-negative, got {self.degree}")

    def radial(self, r: np.ndarray) -> np.ndarray:
        s = self.scale
        if self.profile == "gaussian":
            return np.exp(-0.5 * (r / s) ** 2)
        if self.profile == "exponential":
            return np.exp(-np.sqrt(r**2 + s**2) / s)
        return (r / s) ** (2 * self.degree) * np.exp(-0.5 * (r / s) ** 2)


@dataclass(frozen=True)
class ShellSpec:
    shells: tuple = field(default_factory=tuple)

    @property
    def N(self) -> int:
        return sum(2 * s.l + 1 for s in self.shells)

    @property
    def L2(self) -> float:
        return float(sum((2 * s.l + 1) * s.l * (s.l + 1) for s in self.shells))

    @classmethod
    def from_dicts(cls, items) -> "ShellSpec":
        return cls(tuple(Shell(**d) for d in items))


def real_harmonic(l: int, m: int, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Real spherical harmonic ``Y_lm`` (orthonormal on the sphere)."""
    if m == 0:
        return sph_harm_y(l, 0, theta, phi).real
    Y = sph_harm_y(l, abs(m), theta, phi)
    part = Y.real if m > 0 else Y.imag
    return math.sqrt(2.0) * (-1) ** m * part


def shell_orbitals(shell: Shell, grid: Grid) -> np.ndarray:
    x, y, z = grid.coords
    r = np.broadcast_to(grid.r, grid.shape)
    safe = np.where(r > 0, r, 1.0)
    theta = np.arccos(np.clip(np.broadcast_to(z, grid.shape) / safe, -1.0, 1.0))
    phi = np.arctan2(np.broadcast_to(y, grid.shape), np.broadcast_to(x, grid.shape))
    radial = shell.radial(r) * r**shell.l
    return np.stack([radial * real_harmonic(shell.l, m, theta, phi) for m in range(-shell.l, shell.l + 1)])


def _check_profile(shell: Shell, grid: Grid) -> None:
    lo, hi = 4.0 * grid.h, grid.L / 8.0
    if shell.scale < lo:
        raise InitialDataError(
            f"profile unresolved: scale/h = {shell.scale / grid.h:.3g} < 4 (l={shell.l})"
        )
    if shell.scale > hi:
        raise InitialDataError(
            f"profile not contained: scale/L = {shell.scale / grid.L:.3g} > 1/8 (l={shell.l})"
        )


def shell_state(spec: ShellSpec, grid: Grid, kappa: float = 0.0, mode: str = "hartree-fock") -> OrbitalSet:
    """Sample every shell on the grid and Löwdin-orthonormalize the result."""
    if not spec.shells:
        raise InitialDataError("shell spec is empty")
    blocks = []
    for shell in spec.shells:
        _check_profile(shell, grid)
        orb = shell_orbitals(shell, grid)
        norms = np.sqrt(np.sum(orb**2, axis=(1, 2, 3)) * grid.dv)
        blocks.append(orb / norms[:, None, None, None])
    psi = np.concatenate(blocks).astype(complex)
    raw = OrbitalSet(psi, grid, kappa, 0.0, mode, validate=False)
    S = lowdin_orthonormalize(raw)
    rho = density(S)
    outside = boundary_mass(rho, grid, CONTAIN_FRACTION)
    if outside > CONTAIN_TOL * S.N:
        raise InitialDataError(f"profile not contained: boundary mass / N = {outside / S.N:.3e} > {CONTAIN_TOL:g}")
    return S


def _spectral_interp_matrix(grid: Grid, points: np.ndarray) -> np.ndarray:
    """Rows evaluate the trigonometric interpolant at `points` from ``fft`` coefficients."""
    n = grid.n
    k = grid.k1d.copy()
    E = np.exp(1j * np.outer(points - grid.x1d[0], k)) / n
    # split the Nyquist coefficient evenly between +k and -k
    E[:, n // 2] = np.cos(k[n // 2] * (points - grid.x1d[0])) / n
    # contained fields vanish outside the box; never sample the periodic image
    E[(points < grid.x1d[0]) | (points >= grid.x1d[0] + grid.L)] = 0.0
    return E


def dilate(S: OrbitalSet, lam: float) -> OrbitalSet:
    """``psi -> lam^{3/2} psi(lam x)`` through spectral interpolation."""
    if not lam > 0:
        raise InitialDataError(f"dilation factor must be positive, got {lam}")
    if lam == 1.0:
        return S.replace(psi=S.psi.copy())
    g = S.grid
    E = _spectral_interp_matrix(g, lam * g.x1d)
    fh = g.fft(S.psi)
    out = np.einsum("ia,jabc->jibc", E, fh)
    out = np.einsum("ib,jabc->jaic", E, out)
    out = np.einsum("ic,jabc->jabi", E, out)
    out *= lam**1.5
    new = S.replace(psi=out)
    rho = density(new)
    outside = boundary_mass(rho, g, CONTAIN_FRACTION)
    if outside > 1e-8 * S.N:
        raise InitialDataError(f"dilated state not contained: boundary mass {outside:.3e}")
    tail = tail_fraction(new)
    if tail > 1e-8:
        raise InitialDataError(f"dilated state unresolved: tail fraction {tail:.3e}")
    drift = gram_drift(new)
    if drift > 1e-8:
        raise InitialDataError(f"dilation lost orthonormality: drift {drift:.3e}")
    return new


def critical_coupling(S: OrbitalSet) -> float:
    """Coupling ``2 T / (D - X)`` at which the Hartree-Fock energy vanishes."""
    T, D, X, _ = energy(S.replace(mode="hartree-fock"))
    if not D - X > 1e-12 * max(D, 1e-300):
        raise InitialDataError(f"no finite critical coupling: D - X = {D - X:.3e}")
    return 2.0 * T / (D - X)


@dataclass
class Hypotheses:
    E_hf: float
    T: float
    kappa: float
    kappa_star: float
    N: float
    L2: float
    anisotropy: float
    x4: float
    minus_laplacian: float
    gram_drift: float
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def hypothesis_checklist(S: OrbitalSet, kappa_star: float | None = None) -> Hypotheses:
    """Evaluate the blow-up hypotheses on `S` (negative energy, symmetry, moments)."""
    g = S.grid
    T, D, X, E = energy(S)
    L2 = angular_momentum_sq(S)
    rho = density(S)
    aniso = angular_anisotropy(rho, g, method="exact")
    x4 = float(np.sum(rho * g.r2**2) * g.dv)
    fh = g.fft(S.psi)
    lap = float(np.sum(np.abs(fh) ** 2 * g.k2) * g.dv / g.n**3)
    drift = gram_drift(S)
    checks = {
        "negative_energy": E < 0,
        "spherical_symmetry": aniso <= 1e-6,
        "finite_L2": bool(np.isfinite(L2)),
        "finite_x4": bool(np.isfinite(x4)),
        "finite_kinetic": bool(np.isfinite(lap)),
        "orthonormal": drift <= 1e-8,
    }
    return Hypotheses(
        E_hf=E,
        T=T,
        kappa=S.kappa,
        kappa_star=kappa_star if kappa_star is not None else float("nan"),
        N=particle_number(S),
        L2=L2,
        anisotropy=aniso,
        x4=x4,
        minus_laplacian=lap,
        gram_drift=drift,
        checks=checks,
    )


def prepare_negative_energy(spec: ShellSpec, grid: Grid, margin: float) -> tuple:
    """Shell state with ``kappa = kappa* (1 + margin)``.

    Returns ``(S, kappa, hypotheses)``; raises unless the energy is strictly negative.
    """
    S = shell_state(spec, grid)
    kstar = critical_coupling(S)
    kappa = kstar * (1.0 + margin)
    S = S.replace(kappa=kappa)
    hyp = hypothesis_checklist(S, kstar)
    if not hyp.E_hf < -1e-9 * hyp.T:
        raise InitialDataError(
            f"energy not strictly negative: E_hf = {hyp.E_hf:.3e} at margin {margin:g} (need margin > 0)"
        )
    return S, kappa, hyp

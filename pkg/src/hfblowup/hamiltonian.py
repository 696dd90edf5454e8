"""The Hartree-Fock generator acting on an orbital set.

    H psi_j = sqrt(p^2 + m^2) psi_j - kappa (|.|^-1 * rho) psi_j
              + kappa sum_i (|.|^-1 * psi_j conj(psi_i)) psi_i
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import apply_multiplier
from .orbitals import OrbitalSet, gram_drift

DRIFT_TOL = 1e-6


class GramDriftError(RuntimeError):
    def __init__(self, drift: float, tol: float = DRIFT_TOL):
        super().__init__(f"Gram drift {drift:.3e} exceeds {tol:.1e}")
        self.drift = drift
        self.tol = tol


@dataclass
class PairPotentials:
    """Coulomb potentials of the pair densities of one orbital set.

    ``pair[i][j]`` is ``|.|^-1 * (psi_j conj(psi_i))``; only i <= j is
    computed, the rest follows from ``pair[j][i] = conj(pair[i][j])``.
    `direct` is the potential of the total density.
    """

    direct: np.ndarray
    pair: dict

    def get(self, i: int, j: int) -> np.ndarray:
        if i <= j:
            return self.pair[i, j]
        return self.pair[j, i].conj()


def pair_potentials(S: OrbitalSet, exchange: bool = True) -> PairPotentials:
    """Convolve the diagonal (and, if `exchange`, off-diagonal) pair densities."""
    psi, conv = S.psi, S.grid.coulomb.convolve
    diag = (psi.real**2 + psi.imag**2)
    vdiag = conv(diag)
    pair = {(i, i): vdiag[i] for i in range(S.N)}
    if exchange:
        for i in range(S.N):
            for j in range(i + 1, S.N):
                pair[i, j] = conv(psi[j] * psi[i].conj())
    direct = vdiag[0].copy()
    for v in vdiag[1:]:
        direct += v
    return PairPotentials(direct, pair)


def exchange_operator(S: OrbitalSet, phi: np.ndarray) -> np.ndarray:
    """``R_Q phi = sum_i (|.|^-1 * phi conj(psi_i)) psi_i`` for an arbitrary field."""
    S.grid.check(phi)
    conv = S.grid.coulomb.convolve
    out = np.zeros(S.grid.shape, dtype=complex)
    for psi_i in S.psi:
        out += conv(phi * psi_i.conj()) * psi_i
    return out


def check_drift(S: OrbitalSet, tol: float = DRIFT_TOL) -> float:
    drift = gram_drift(S)
    if drift > tol:
        raise GramDriftError(drift, tol)
    return drift


def apply_hamiltonian(
    S: OrbitalSet,
    potentials: PairPotentials | None = None,
    drift_tol: float | None = DRIFT_TOL,
) -> np.ndarray:
    """``(H psi_j)_j`` as an array of shape ``(N, n, n, n)``.

    Pass ``drift_tol=None`` to skip the Gram check (Runge-Kutta stages are not
    orthonormal to better than O(dt^2)).
    """
    if drift_tol is not None:
        check_drift(S, drift_tol)
    out = apply_multiplier(S.psi, S.grid.symbol("dispersion"))
    if S.mode == "free" or S.kappa == 0.0:
        return out
    hf = S.mode == "hartree-fock"
    if potentials is None:
        potentials = pair_potentials(S, exchange=hf)
    kappa, psi = S.kappa, S.psi
    for j in range(S.N):
        term = -potentials.direct * psi[j]
        if hf:
            for i in range(S.N):
                term += potentials.get(i, j) * psi[i]
        out[j] += kappa * term
    return out


def rhs(
    S: OrbitalSet,
    drift_tol: float | None = DRIFT_TOL,
    potentials: PairPotentials | None = None,
) -> np.ndarray:
    """Time derivative ``-i H psi_j``."""
    return -1j * apply_hamiltonian(S, potentials, drift_tol=drift_tol)

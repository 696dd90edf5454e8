"""Orbital sets representing a rank-N projection ``Q = sum_j |psi_j><psi_j|``.

Binary container layout (``*.orb``), all fields little-endian::

    offset  size  field
    0       8     magic b"HFORB\\x00\\x01\\x00"
    8       4     endianness tag, uint32 0x01020304
    12      4     n (uint32)
    16      8     L (float64)
    24      8     m (float64)
    32      8     kappa (float64)
    40      4     N (uint32)
    44      4     mode code (uint32): 0 hartree-fock, 1 hartree, 2 free
    48      8     t (float64)
    56      ...   N * n^3 complex128 values, orbital-major, C order (x, y, z)

A JSON sidecar (``<path>.json``) repeats the metadata in readable form.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np

from .grid import Grid, boundary_mass, inner  # noqa: F401  (re-exported)

logger = logging.getLogger(__name__)

MODES = ("hartree-fock", "hartree", "free")
ORTHO_TOL = 1e-8

_MAGIC = b"HFORB\x00\x01\x00"
_HEADER = struct.Struct("<8sIIdddIId")
_ENDIAN_TAG = 0x01020304


class OrthonormalityError(ValueError):
    """Orbitals fail the orthonormality requirement."""


class SingularGramError(ValueError):
    def __init__(self, eigenvalue: float):
        super().__init__(f"Gram matrix is singular: smallest eigenvalue {eigenvalue:.3e}")
        self.eigenvalue = eigenvalue


class OrbitalSet:
    """N orbitals on a grid together with the physical parameters.

    The orbital array has shape ``(N, n, n, n)`` and is made read-only.
    With ``validate=True`` the Gram matrix must be the identity to within
    `ortho_tol`; time stepping constructs intermediate sets with
    ``validate=False`` and monitors the drift itself.
    """

    def __init__(
        self,
        psi,
        grid: Grid,
        kappa: float = 0.0,
        t: float = 0.0,
        mode: str = "hartree-fock",
        *,
        validate: bool = True,
        ortho_tol: float = ORTHO_TOL,
    ):
        psi = np.array(psi, dtype=complex)
        if psi.ndim == 3:
            psi = psi[None]
        grid.check(psi)
        if psi.ndim != 4 or len(psi) == 0:
            raise ValueError(f"expected orbitals of shape (N, n, n, n), got {psi.shape}")
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if kappa < 0:
            raise ValueError(f"coupling must be non-negative, got {kappa}")
        psi.flags.writeable = False
        self.psi = psi
        self.grid = grid
        self.kappa = float(kappa)
        self.t = float(t)
        self.mode = mode
        if validate:
            drift = gram_drift(self)
            if drift > ortho_tol:
                raise OrthonormalityError(f"||G - I||_max = {drift:.3e} exceeds {ortho_tol:.1e}")

    @property
    def N(self) -> int:
        return len(self.psi)

    @property
    def m(self) -> float:
        return self.grid.m

    def replace(self, **changes) -> "OrbitalSet":
        kw = dict(psi=self.psi, grid=self.grid, kappa=self.kappa, t=self.t, mode=self.mode)
        validate = changes.pop("validate", False)
        kw.update(changes)
        return OrbitalSet(**kw, validate=validate)

    def __repr__(self) -> str:
        return f"OrbitalSet(N={self.N}, {self.grid}, kappa={self.kappa:g}, t={self.t:g}, mode={self.mode!r})"


# -- Gram bookkeeping ------------------------------------------------------------


def gram(S: OrbitalSet) -> np.ndarray:
    """``G_ij = <psi_i, psi_j>``."""
    flat = S.psi.reshape(S.N, -1)
    return (flat.conj() @ flat.T) * S.grid.dv


def gram_drift(S: OrbitalSet) -> float:
    return float(np.max(np.abs(gram(S) - np.eye(S.N))))


def lowdin_orthonormalize(S: OrbitalSet, min_eigenvalue: float = 1e-10) -> OrbitalSet:
    """Symmetric orthonormalization ``psi G^{-1/2}``; keeps the spanned subspace."""
    G = gram(S)
    G = 0.5 * (G + G.conj().T)
    w, U = np.linalg.eigh(G)
    if w[0] <= min_eigenvalue:
        raise SingularGramError(float(w[0]))
    inv_sqrt = (U / np.sqrt(w)) @ U.conj().T
    psi = np.tensordot(inv_sqrt.T, S.psi, axes=1)
    return S.replace(psi=psi, validate=True)


def mix(S: OrbitalSet, U: np.ndarray) -> OrbitalSet:
    """Orbitals ``psi'_j = sum_i psi_i U_ij``; leaves Q unchanged for unitary U."""
    return S.replace(psi=np.tensordot(np.asarray(U).T, S.psi, axes=1))


# -- densities -----------------------------------------------------------------


def density(S: OrbitalSet) -> np.ndarray:
    """``rho(x) = sum_j |psi_j(x)|^2``."""
    psi = S.psi
    return np.einsum("jxyz,jxyz->xyz", psi.real, psi.real) + np.einsum(
        "jxyz,jxyz->xyz", psi.imag, psi.imag
    )


def pair_density(S: OrbitalSet, i: int, j: int) -> np.ndarray:
    """``rho_ij(x) = psi_j(x) conj(psi_i(x))``."""
    for idx in (i, j):
        if not 0 <= idx < S.N:
            raise IndexError(f"orbital index {idx} out of range for N={S.N}")
    return S.psi[j] * S.psi[i].conj()


def _shell_index(grid: Grid) -> np.ndarray:
    return np.floor(grid.r / grid.h).astype(np.int64).ravel()


def angular_anisotropy(rho: np.ndarray, grid: Grid, method: str = "shell") -> float:
    """Departure of a real field from spherical symmetry.

    ``method="shell"`` bins points into radial shells of width h, removes a
    quadratic-in-r trend inside each shell and returns the largest residual
    standard deviation divided by the largest absolute shell mean. The value
    for a smooth radial field is the grid-sampling floor (about 1e-4 for a
    Gaussian of width 4h).

    ``method="exact"`` groups points of exactly equal radius instead; it
    vanishes to round-off for any sampled radial field.
    """
    rho = np.asarray(grid.check(rho))
    if np.iscomplexobj(rho):
        if np.max(np.abs(rho.imag)) > 1e-12 * max(np.max(np.abs(rho.real)), 1e-300):
            raise ValueError("anisotropy requires a real field")
        rho = rho.real
    f = rho.ravel()
    if method == "exact":
        key = np.rint(grid.r2 / grid.h**2).astype(np.int64).ravel()
        cnt = np.bincount(key)
        mean = np.bincount(key, f)
        np.divide(mean, cnt, out=mean, where=cnt > 0)
        var = np.bincount(key, (f - mean[key]) ** 2)
        np.divide(var, cnt, out=var, where=cnt > 0)
        scale = np.max(np.abs(mean[cnt > 0]))
        return 0.0 if scale == 0 else float(np.sqrt(var.max()) / scale)
    if method != "shell":
        raise ValueError(f"unknown anisotropy method {method!r}")

    shell = _shell_index(grid)
    nshell = shell.max() + 1
    cnt = np.bincount(shell, minlength=nshell).astype(float)
    r = grid.r.ravel()
    rbar = np.bincount(shell, r, nshell) / cnt
    u = (r - rbar[shell]) / grid.h
    powers = [np.ones_like(u), u, u * u]
    A = np.empty((nshell, 3, 3))
    b = np.empty((nshell, 3))
    for a in range(3):
        b[:, a] = np.bincount(shell, powers[a] * f, nshell)
        for c in range(a, 3):
            A[:, a, c] = A[:, c, a] = np.bincount(shell, powers[a] * powers[c], nshell)
    coef = np.einsum("sij,sj->si", np.linalg.pinv(A, rcond=1e-10), b)
    fit = coef[shell, 0] + coef[shell, 1] * u + coef[shell, 2] * u * u
    resid2 = np.bincount(shell, (f - fit) ** 2, nshell)
    mean = np.bincount(shell, f, nshell) / cnt
    scale = np.max(np.abs(mean))
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.max(resid2 / cnt)) / scale)


# -- serialization ---------------------------------------------------------------


def save_orbitals(S: OrbitalSet, path) -> Path:
    """Write the binary container and its JSON sidecar; returns the container path."""
    path = Path(path)
    header = _HEADER.pack(
        _MAGIC,
        _ENDIAN_TAG,
        S.grid.n,
        S.grid.L,
        S.grid.m,
        S.kappa,
        S.N,
        MODES.index(S.mode),
        S.t,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(S.psi, dtype="<c16").tobytes())
    meta = {
        "format": "hfblowup-orbitals",
        "version": 1,
        "endianness": "little",
        "n": S.grid.n,
        "L": S.grid.L,
        "m": S.grid.m,
        "kappa": S.kappa,
        "N": S.N,
        "t": S.t,
        "mode": S.mode,
        "dtype": "complex128",
        "layout": "orbital-major, C order (x, y, z), centered coordinates x = -L/2 + i L/n",
        "header_bytes": _HEADER.size,
    }
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def load_orbitals(path, coulomb_pad: float = 2.0, validate: bool = True) -> OrbitalSet:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, tag, n, L, m, kappa, N, mode, t = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError(f"{path}: not an orbital container")
    if tag != _ENDIAN_TAG:
        raise ValueError(f"{path}: endianness tag mismatch ({tag:#x})")
    expected = _HEADER.size + N * n**3 * 16
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    psi = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(N, n, n, n)
    grid = Grid(n, L, m, coulomb_pad)
    return OrbitalSet(psi.astype(complex), grid, kappa, t, MODES[mode], validate=validate)
